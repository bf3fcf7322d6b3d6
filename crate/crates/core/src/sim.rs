//! Scenario orchestration.
//!
//! The controller is integrated with RK4 at the fine step `dt`; every
//! `t_out` the filter runs one predict/update against the newest
//! measurement and refreshes `J`, which is then held until the next update.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::averaging::simulate_lbs;
use crate::error::{Error, Result};
use crate::esc::{
    controller_step_tracking, EscParams, EscState, FilterTarget, Variant,
    WashoutState,
};
use crate::field::{build_field, FieldSpec, ScalarField, SensorModel};
use crate::gekf::{
    anchor, gradient_estimate, lbs_estimate, predict, update, GekfParams, GekfSettings, GekfState,
};
use crate::Point;

/// Name of the generator behind [`make_rng`], recorded in run metadata.
pub const RNG_ALGORITHM: &str = "ChaCha8";

pub fn make_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Classical four-stage Runge-Kutta step.
pub fn rk4_step<const N: usize>(
    state: [f64; N],
    rhs: impl Fn(f64, &[f64; N]) -> [f64; N],
    t: f64,
    dt: f64,
) -> [f64; N] {
    let axpy = |y: &[f64; N], k: &[f64; N], h: f64| -> [f64; N] {
        std::array::from_fn(|i| y[i] + h * k[i])
    };
    let k1 = rhs(t, &state);
    let k2 = rhs(t + 0.5 * dt, &axpy(&state, &k1, 0.5 * dt));
    let k3 = rhs(t + 0.5 * dt, &axpy(&state, &k2, 0.5 * dt));
    let k4 = rhs(t + dt, &axpy(&state, &k3, dt));
    std::array::from_fn(|i| state[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MeasurementCadence {
    /// The controller sees a fresh measurement every integration step.
    #[default]
    #[serde(rename = "fine")]
    Fine,
    /// The controller sees the filter's measurement, held for `t_out`.
    #[serde(rename = "t_out")]
    TOut,
}

fn default_dt() -> f64 {
    1e-3
}

fn default_output_every() -> usize {
    10
}

/// Complete description of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub field: FieldSpec,
    pub esc: EscParams,
    /// Required by the adaptive variant; optional (diagnostic only) for
    /// the baseline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gekf: Option<GekfSettings>,
    #[serde(default)]
    pub noise_std: f64,
    pub initial_position: Point,
    pub duration: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Record every n-th integration step.
    #[serde(default = "default_output_every")]
    pub output_every: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub measurement_cadence: MeasurementCadence,
}

impl Scenario {
    /// The known-objective simulation with the adaptive controller, or the
    /// constant-amplitude baseline, over 100 s.
    pub fn known_objective(variant: Variant) -> Self {
        Self {
            field: FieldSpec::known_objective(),
            esc: EscParams::known_objective(variant),
            gekf: (variant == Variant::GekfAdaptive).then(GekfSettings::known_objective),
            noise_std: 0.0,
            initial_position: [2.0, 2.0],
            duration: 100.0,
            dt: default_dt(),
            output_every: default_output_every(),
            seed: 0,
            measurement_cadence: MeasurementCadence::Fine,
        }
    }

    /// Checks invariants and fills derived defaults (`alpha`, a `t_out`
    /// snapped onto the `dt` grid). Returns the resolved scenario and any
    /// warnings.
    pub fn resolve(&self) -> Result<(Scenario, Vec<String>)> {
        let mut sc = self.clone();
        let mut warnings = Vec::new();
        build_field(&sc.field)?;
        sc.esc.validate()?;
        if !(sc.duration >= 0.0 && sc.duration.is_finite()) {
            return Err(Error::param("duration", "must be finite and >= 0"));
        }
        if !(sc.dt > 0.0 && sc.dt.is_finite()) {
            return Err(Error::param("dt", "must be positive"));
        }
        let max_dt = sc.esc.period() / 50.0;
        if sc.dt > max_dt {
            return Err(Error::param(
                "dt",
                format!("{} does not resolve the dither; need <= {max_dt:.3e}", sc.dt),
            ));
        }
        if sc.output_every == 0 {
            return Err(Error::param("output_every", "must be at least 1"));
        }
        if !(sc.noise_std >= 0.0 && sc.noise_std.is_finite()) {
            return Err(Error::param("noise_std", "must be finite and >= 0"));
        }
        if !sc.initial_position.iter().all(|v| v.is_finite()) {
            return Err(Error::param("initial_position", "must be finite"));
        }
        match (&mut sc.gekf, sc.esc.variant) {
            (None, Variant::GekfAdaptive) => {
                return Err(Error::param("gekf", "adaptive variant needs filter settings"))
            }
            (None, Variant::BaselineConstant) => {
                if sc.measurement_cadence == MeasurementCadence::TOut {
                    return Err(Error::param(
                        "measurement_cadence",
                        "t_out cadence needs filter settings",
                    ));
                }
            }
            (Some(g), _) => {
                let n = (g.t_out / sc.dt).round().max(1.0);
                let snapped = n * sc.dt;
                if (snapped - g.t_out).abs() > 1e-9 * g.t_out {
                    warnings.push(format!(
                        "t_out = {} is not a multiple of dt = {}; using {snapped}",
                        g.t_out, sc.dt
                    ));
                    g.t_out = snapped;
                }
                g.alpha.get_or_insert([sc.esc.c / 2.0; 2]);
                GekfParams::new(g, sc.esc.omega, sc.esc.c, sc.esc.a0)?;
            }
        }
        Ok((sc, warnings))
    }

    /// SHA-256 of the scenario's JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("scenario serialises");
        format!("{:x}", Sha256::digest(json))
    }
}

/// One recorded sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub position: Point,
    pub f_true: f64,
    pub f_meas: f64,
    pub amplitudes: [f64; 2],
    pub j: [f64; 2],
    pub grad_est: Point,
    pub grad_true: Point,
    pub p_diag: [f64; 5],
}

/// Column names, in order, of a sample's flat form.
pub const COLUMNS: [&str; 18] = [
    "t", "x", "y", "f_true", "f_meas", "a_x", "a_y", "J_x", "J_y", "gx_est", "gy_est", "gx_true",
    "gy_true", "P11", "P22", "P33", "P44", "P55",
];

impl Sample {
    pub fn to_row(&self) -> [f64; 18] {
        let p = self.p_diag;
        [
            self.t,
            self.position[0],
            self.position[1],
            self.f_true,
            self.f_meas,
            self.amplitudes[0],
            self.amplitudes[1],
            self.j[0],
            self.j[1],
            self.grad_est[0],
            self.grad_est[1],
            self.grad_true[0],
            self.grad_true[1],
            p[0],
            p[1],
            p[2],
            p[3],
            p[4],
        ]
    }

    pub fn from_row(r: &[f64; 18]) -> Self {
        Self {
            t: r[0],
            position: [r[1], r[2]],
            f_true: r[3],
            f_meas: r[4],
            amplitudes: [r[5], r[6]],
            j: [r[7], r[8]],
            grad_est: [r[9], r[10]],
            grad_true: [r[11], r[12]],
            p_diag: [r[13], r[14], r[15], r[16], r[17]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub scenario_hash: String,
    pub seed: u64,
    pub rng: String,
    pub measurement_updates: usize,
    /// Smallest covariance eigenvalue seen after any update.
    pub min_covariance_eigenvalue: Option<f64>,
    /// Largest `|P - P^T|` entry seen after any update.
    pub max_covariance_asymmetry: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub samples: Vec<Sample>,
    pub meta: RecordMeta,
}

impl TrajectoryRecord {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn positions(&self) -> Vec<Point> {
        self.samples.iter().map(|s| s.position).collect()
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Invalid(#[from] Error),
    #[error("numerical abort: {source}")]
    Aborted {
        partial: Box<TrajectoryRecord>,
        #[source]
        source: Error,
    },
}

struct Filter {
    params: GekfParams,
    state: GekfState,
    nsub: usize,
}

/// Runs a scenario to completion.
pub fn run_scenario(scenario: &Scenario) -> Result<TrajectoryRecord, RunError> {
    let (sc, warnings) = scenario.resolve()?;
    for w in &warnings {
        log::warn!("{w}");
    }
    run_resolved(&sc)
}

/// Runs a scenario without validating it first. Used for deliberately
/// unstable configurations; everything else goes through [`run_scenario`].
pub fn run_unchecked(scenario: &Scenario) -> Result<TrajectoryRecord, RunError> {
    let mut sc = scenario.clone();
    if let Some(g) = sc.gekf.as_mut() {
        g.alpha.get_or_insert([sc.esc.c / 2.0; 2]);
    }
    run_resolved(&sc)
}

fn run_resolved(sc: &Scenario) -> Result<TrajectoryRecord, RunError> {
    let field = build_field(&sc.field)?;
    let esc_params = sc.esc;
    let mut sensor = SensorModel::new(sc.noise_std, make_rng(sc.seed))?;

    let steps = (sc.duration / sc.dt).round() as usize;
    let p0 = sc.initial_position;
    let mut f_meas = sensor.measure(&field, p0, 0.0);

    let mut esc = EscState::new(p0, &esc_params);
    if esc_params.filter_target == FilterTarget::Measurement {
        esc.filters = [WashoutState::settled(f_meas, esc_params.filter_kind); 2];
    }

    let mut filter = match &sc.gekf {
        Some(g) => Some(Filter {
            params: GekfParams::new(g, esc_params.omega, esc_params.c, esc_params.a0)?,
            state: GekfState::from_settings(g, f_meas)?,
            nsub: ((g.t_out / sc.dt).round() as usize).max(1),
        }),
        None => None,
    };
    let cadence = match (&filter, sc.measurement_cadence) {
        (Some(_), c) => c,
        (None, _) => MeasurementCadence::Fine,
    };

    let mut meta = RecordMeta {
        scenario_hash: sc.hash(),
        seed: sc.seed,
        rng: RNG_ALGORITHM.to_string(),
        measurement_updates: 0,
        min_covariance_eigenvalue: None,
        max_covariance_asymmetry: None,
    };
    let mut samples = Vec::with_capacity(steps / sc.output_every + 1);
    let mut j = [0.0; 2];
    let mut grad_est = [0.0; 2];
    let mut drive_sum = [0.0; 2];
    let mut drive_n = 0usize;
    let mut held = f_meas;

    let abort = |samples: Vec<Sample>, meta: RecordMeta, source: Error| RunError::Aborted {
        partial: Box::new(TrajectoryRecord { samples, meta }),
        source,
    };

    for k in 0..=steps {
        let t = k as f64 * sc.dt;
        let update_due = filter.as_ref().is_some_and(|f| k > 0 && k % f.nsub == 0);
        if k > 0 && (cadence == MeasurementCadence::Fine || update_due) {
            f_meas = sensor.measure(&field, esc.position, t);
        }

        if let (Some(f), true) = (filter.as_mut(), update_due) {
            f.params.amplitudes = esc.amplitudes;
            f.params.drive = (esc_params.filters_measurement() && drive_n > 0)
                .then(|| [drive_sum[0] / drive_n as f64, drive_sum[1] / drive_n as f64]);
            let t_mid = t - f.params.t_out / 2.0;
            if f.params.anchor_f {
                f.state = anchor(&f.state, held, f.params.r);
            }
            f.state = update(&predict(&f.state, &f.params), f_meas, &f.params, t_mid);
            meta.measurement_updates += 1;
            if !f.state.is_finite() {
                let e = Error::NonFinite {
                    t,
                    what: "filter state".into(),
                };
                return Err(abort(samples, meta, e));
            }
            let min_eig = f.state.min_eigenvalue();
            let asym = (f.state.p - f.state.p.transpose()).amax();
            meta.min_covariance_eigenvalue =
                Some(meta.min_covariance_eigenvalue.map_or(min_eig, |m| m.min(min_eig)));
            meta.max_covariance_asymmetry =
                Some(meta.max_covariance_asymmetry.map_or(asym, |m| m.max(asym)));
            grad_est = gradient_estimate(&f.state, &f.params);
            j = lbs_estimate(grad_est, f.params.alpha).j;
            drive_sum = [0.0; 2];
            drive_n = 0;
            held = f_meas;
        }

        if k % sc.output_every == 0 {
            let p_diag = filter.as_ref().map_or([0.0; 5], |f| {
                std::array::from_fn(|i| f.state.p[(i, i)])
            });
            samples.push(Sample {
                t,
                position: esc.position,
                f_true: field.eval(esc.position, t),
                f_meas,
                amplitudes: esc.amplitudes,
                j,
                grad_est,
                grad_true: field.grad(esc.position, t),
                p_diag,
            });
        }
        if k == steps {
            break;
        }

        let step = match cadence {
            MeasurementCadence::Fine => {
                // keep this step's noise draw, follow the field between stages
                let noise = f_meas - field.eval(esc.position, t);
                let measure = |p: Point, tt: f64| field.eval(p, tt) + noise;
                controller_step_tracking(&esc, f_meas, measure, j, &esc_params, t, sc.dt)
            }
            MeasurementCadence::TOut => {
                controller_step_tracking(&esc, held, |_, _| held, j, &esc_params, t, sc.dt)
            }
        };
        match step {
            Ok((next, signals)) => {
                esc = next;
                drive_sum[0] += signals.drive[0];
                drive_sum[1] += signals.drive[1];
                drive_n += 1;
            }
            Err(e) => return Err(abort(samples, meta, e)),
        }
    }
    Ok(TrajectoryRecord { samples, meta })
}

/// Largest distance over `[0, horizon]` between the constant-amplitude
/// controller (raw measurement, no filters) and the averaged system, both
/// started at `p0` and sampled every `dt`.
pub fn esc_lbs_sup_distance(
    field: &ScalarField,
    esc: &EscParams,
    p0: Point,
    horizon: f64,
    dt: f64,
) -> Result<f64> {
    let params = EscParams {
        variant: Variant::BaselineConstant,
        filter_corners: [0.0, 0.0],
        ..*esc
    };
    let reference = simulate_lbs(p0, field, &params, horizon, dt)?;
    let mut s = EscState::new(p0, &params);
    let mut sup: f64 = 0.0;
    for (k, (_, z)) in reference.iter().enumerate() {
        if k > 0 {
            let t0 = (k - 1) as f64 * dt;
            let f = field.eval(s.position, t0);
            let measure = |p: Point, t: f64| field.eval(p, t);
            s = controller_step_tracking(&s, f, measure, [0.0; 2], &params, t0, dt)?.0;
        }
        sup = sup.max((s.position[0] - z[0]).hypot(s.position[1] - z[1]));
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn rk4_zero_rhs() {
        let y = rk4_step([1.0, -2.0], |_, _| [0.0, 0.0], 0.0, 0.1);
        assert_eq!(y, [1.0, -2.0]);
    }

    #[test]
    fn rk4_exponential_decay() {
        let y = rk4_step([1.0], |_, y: &[f64; 1]| [-y[0]], 0.0, 0.1);
        assert!((y[0] - 0.9048375).abs() < 1e-7);
        assert!((y[0] - (-0.1f64).exp()).abs() < 1e-7);
    }

    #[test]
    fn rk4_is_exact_for_quartic_quadrature() {
        // y' = p(t) with deg p <= 3: one RK4 step is Simpson, exact
        let p = |t: f64| 1.0 - 2.0 * t + 3.0 * t * t - 4.0 * t * t * t;
        let antiderivative = |t: f64| t - t * t + t * t * t - t * t * t * t;
        let (t0, dt) = (0.3, 0.7);
        let y = rk4_step([0.0], |t, _| [p(t)], t0, dt);
        assert!((y[0] - (antiderivative(t0 + dt) - antiderivative(t0))).abs() < 1e-14);
    }

    #[test]
    fn rng_streams() {
        let draws = |seed| -> Vec<u64> {
            let mut r = make_rng(seed);
            (0..100).map(|_| r.gen()).collect()
        };
        assert_eq!(draws(9), draws(9));
        assert_ne!(draws(9), draws(10));
    }

    #[test]
    fn zero_duration_gives_one_row() {
        let mut sc = Scenario::known_objective(Variant::GekfAdaptive);
        sc.duration = 0.0;
        let r = run_scenario(&sc).unwrap();
        assert_eq!(r.samples.len(), 1);
        let s = r.samples[0];
        assert_eq!(s.position, [2.0, 2.0]);
        assert_eq!(s.amplitudes, [1.0, 1.0]);
        assert_eq!(s.f_true, 8.0);
        assert_eq!(r.meta.measurement_updates, 0);
    }

    #[test]
    fn update_count_and_row_count() {
        let mut sc = Scenario::known_objective(Variant::GekfAdaptive);
        sc.duration = 2.35;
        sc.output_every = 7;
        let r = run_scenario(&sc).unwrap();
        assert_eq!(r.meta.measurement_updates, 23);
        assert_eq!(r.samples.len(), 2350 / 7 + 1);
        assert!(r.samples.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn still_without_excitation() {
        let mut sc = Scenario::known_objective(Variant::BaselineConstant);
        sc.esc.c = 0.0;
        sc.esc.a0 = [0.0, 0.0];
        sc.duration = 5.0;
        let r = run_scenario(&sc).unwrap();
        assert!(r.samples.iter().all(|s| s.position == [2.0, 2.0]));
    }

    #[test]
    fn same_seed_same_record() {
        let mut sc = Scenario::known_objective(Variant::GekfAdaptive);
        sc.duration = 3.0;
        sc.noise_std = 0.2;
        sc.seed = 77;
        let a = run_scenario(&sc).unwrap();
        let b = run_scenario(&sc).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.meta.rng, RNG_ALGORITHM);
        sc.seed = 78;
        let c = run_scenario(&sc).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn resolve_snaps_t_out_and_fills_alpha() {
        let mut sc = Scenario::known_objective(Variant::GekfAdaptive);
        sc.gekf.as_mut().unwrap().t_out = 0.10004;
        let (r, w) = sc.resolve().unwrap();
        assert_eq!(w.len(), 1);
        let g = r.gekf.unwrap();
        assert!((g.t_out - 0.1).abs() < 1e-12);
        assert_eq!(g.alpha, Some([0.15, 0.15]));
    }

    #[test]
    fn resolve_rejects_coarse_dt_and_missing_filter() {
        let mut sc = Scenario::known_objective(Variant::GekfAdaptive);
        sc.dt = 0.01;
        assert!(sc.resolve().is_err());
        let mut sc = Scenario::known_objective(Variant::GekfAdaptive);
        sc.gekf = None;
        assert!(sc.resolve().is_err());
    }

    #[test]
    fn divergence_aborts_with_partial_record() {
        let mut sc = Scenario::known_objective(Variant::GekfAdaptive);
        sc.esc.lambda = [-100.0, -100.0];
        sc.duration = 20.0;
        assert!(run_scenario(&sc).is_err());
        match run_unchecked(&sc) {
            Err(RunError::Aborted { partial, .. }) => {
                assert!(!partial.samples.is_empty());
                assert!(partial.samples.last().unwrap().t < 20.0);
            }
            other => panic!("expected abort, got {other:?}"),
        }
    }
}
