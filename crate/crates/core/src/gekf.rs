//! Continuous-discrete extended Kalman filter estimating the objective
//! gradient from scalar measurements taken along the dithered path.
//!
//! State `X = (K/2 df/dx, K/2 df/dy, rate of X1, rate of X2, f)` with
//! `K = (2/sqrt(w)) sin(w dt/2)`. Between measurements the state follows a
//! constant-velocity model integrated with Euler substeps; at each
//! measurement the first-order expansion of `f` along the dithered flow
//! over the last interval gives the measurement model.

use nalgebra::{SMatrix, SVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Point;

pub type Vector5 = SVector<f64, 5>;
pub type Matrix5 = SMatrix<f64, 5, 5>;

/// Most negative eigenvalue tolerated for a covariance.
pub const PSD_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasurementModel {
    /// Expansion consistent with the controller's sin/cos pairing.
    Derived,
    /// Expansion with the sin/cos pairing exactly as printed.
    PaperLiteral,
}

impl std::str::FromStr for MeasurementModel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "derived" => Ok(Self::Derived),
            "paper-literal" => Ok(Self::PaperLiteral),
            other => Err(format!("unknown measurement model `{other}`")),
        }
    }
}

/// `(2/sqrt(w)) sin(w dt/2)`: the displacement scale of a sin/cos dither
/// integrated over `dt`.
pub fn compute_k(omega: f64, dt: f64) -> f64 {
    2.0 / omega.sqrt() * (omega * dt / 2.0).sin()
}

/// Filter settings as they appear in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GekfSettings {
    /// Measurement / output cadence, s. Also the `dt` inside `K`.
    pub t_out: f64,
    /// Euler substeps per prediction.
    pub substeps: usize,
    /// Process noise, `q * I`.
    pub q: f64,
    /// Measurement variance.
    pub r: f64,
    /// Initial covariance diagonal.
    pub p0: [f64; 5],
    /// Initial state; `(0, 0, 0, 0, f(p0))` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<[f64; 5]>,
    /// `J = alpha * grad`; `c/2` per channel when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<[f64; 2]>,
    #[serde(default = "default_model")]
    pub measurement_model: MeasurementModel,
    /// Joseph-form covariance update.
    #[serde(default)]
    pub joseph: bool,
    /// Reset `X5` to the previous measurement before each update.
    #[serde(default)]
    pub anchor_f: bool,
}

fn default_model() -> MeasurementModel {
    MeasurementModel::Derived
}

impl GekfSettings {
    pub fn known_objective() -> Self {
        Self {
            t_out: 0.1,
            substeps: 10,
            q: 0.05,
            r: 0.5,
            p0: [4.0; 5],
            x0: None,
            alpha: None,
            measurement_model: MeasurementModel::Derived,
            joseph: false,
            anchor_f: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GekfParams {
    pub t_out: f64,
    pub substeps: usize,
    pub q: Matrix5,
    pub r: f64,
    pub k: f64,
    pub omega: f64,
    pub c: f64,
    pub alpha: [f64; 2],
    pub model: MeasurementModel,
    pub joseph: bool,
    pub anchor_f: bool,
    /// Live controller amplitudes `[a_x, a_y]`, refreshed before each update.
    pub amplitudes: [f64; 2],
    /// Known `f` drive of each channel over the last interval when the
    /// controller runs on a filtered measurement; `None` means the drive is
    /// the raw objective and the model uses `X5`.
    pub drive: Option<[f64; 2]>,
}

impl GekfParams {
    pub fn new(settings: &GekfSettings, omega: f64, c: f64, amplitudes: [f64; 2]) -> Result<Self> {
        if !(settings.t_out > 0.0 && settings.t_out.is_finite()) {
            return Err(Error::param("t_out", "must be positive"));
        }
        if settings.substeps == 0 {
            return Err(Error::param("substeps", "must be at least 1"));
        }
        if !(settings.q >= 0.0 && settings.q.is_finite()) {
            return Err(Error::param("q", "must be >= 0"));
        }
        if !(settings.r > 0.0 && settings.r.is_finite()) {
            return Err(Error::param("r", "must be > 0"));
        }
        if !(omega > 0.0) {
            return Err(Error::param("omega", "must be > 0"));
        }
        let k = compute_k(omega, settings.t_out);
        if k.abs() < 1e-12 {
            return Err(Error::param(
                "t_out",
                format!("w * t_out = {} is a multiple of 2 pi, K vanishes", omega * settings.t_out),
            ));
        }
        Ok(Self {
            t_out: settings.t_out,
            substeps: settings.substeps,
            q: Matrix5::identity() * settings.q,
            r: settings.r,
            k,
            omega,
            c,
            alpha: settings.alpha.unwrap_or([c / 2.0; 2]),
            model: settings.measurement_model,
            joseph: settings.joseph,
            anchor_f: settings.anchor_f,
            amplitudes,
            drive: None,
        })
    }
}

/// Jacobian of the constant-velocity propagation model.
pub fn state_jacobian() -> Matrix5 {
    let mut a = Matrix5::zeros();
    a[(0, 2)] = 1.0;
    a[(1, 3)] = 1.0;
    a
}

#[derive(Debug, Clone, PartialEq)]
pub struct GekfState {
    pub x: Vector5,
    pub p: Matrix5,
}

fn min_eigenvalue(p: &Matrix5) -> f64 {
    SymmetricEigen::new(*p).eigenvalues.min()
}

impl GekfState {
    /// Rejects a non-symmetric or indefinite `p0`.
    pub fn init(x0: Vector5, p0: Matrix5) -> Result<Self> {
        if !x0.iter().chain(p0.iter()).all(|v| v.is_finite()) {
            return Err(Error::param("x0/p0", "must be finite"));
        }
        let scale = p0.amax().max(1.0);
        if (p0 - p0.transpose()).amax() > 1e-12 * scale {
            return Err(Error::param("p0", "must be symmetric"));
        }
        let min = min_eigenvalue(&p0);
        if min < -PSD_TOLERANCE {
            return Err(Error::NotPositiveSemiDefinite { min_eigenvalue: min });
        }
        Ok(Self { x: x0, p: p0 })
    }

    /// Zero-gradient prior at a known objective value.
    pub fn from_settings(settings: &GekfSettings, f0: f64) -> Result<Self> {
        let x0 = settings.x0.unwrap_or([0.0, 0.0, 0.0, 0.0, f0]);
        Self::init(
            Vector5::from_row_slice(&x0),
            Matrix5::from_diagonal(&Vector5::from_row_slice(&settings.p0)),
        )
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.p)
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.p.iter()).all(|v| v.is_finite())
    }
}

/// Euler-substep propagation over one output interval.
pub fn predict(s: &GekfState, p: &GekfParams) -> GekfState {
    let a = state_jacobian();
    let h = p.t_out / p.substeps as f64;
    let mut x = s.x;
    let mut cov = s.p;
    for _ in 0..p.substeps {
        let rate = Vector5::new(x[2], x[3], 0.0, 0.0, 0.0);
        x += rate * h;
        cov += (a * cov + cov * a.transpose() + p.q) * h;
    }
    GekfState { x, p: cov }
}

/// Pins `X5` to the measurement taken at the start of the coming interval,
/// with variance `r` and no correlation to the other states.
pub fn anchor(s: &GekfState, f_prev: f64, r: f64) -> GekfState {
    let mut n = s.clone();
    n.x[4] = f_prev;
    n.p.row_mut(4).fill(0.0);
    n.p.column_mut(4).fill(0.0);
    n.p[(4, 4)] = r;
    n
}

/// `f` drive used by the model for each channel, and whether it is the
/// state `X5` (and so enters the Jacobian).
fn drive_terms(s: &GekfState, p: &GekfParams) -> ([f64; 2], bool) {
    match p.drive {
        Some(d) => (d, false),
        None => ([s.x[4]; 2], true),
    }
}

/// Predicted measurement at the end of an interval whose midpoint is `t_mid`.
pub fn h_measure(s: &GekfState, p: &GekfParams, t_mid: f64) -> f64 {
    let (sn, cs) = (p.omega * t_mid).sin_cos();
    let (x1, x2, x5) = (s.x[0], s.x[1], s.x[4]);
    let ([fx, fy], _) = drive_terms(s, p);
    let [ax, ay] = p.amplitudes;
    let c = p.c;
    match p.model {
        MeasurementModel::Derived => {
            x5 + (2.0 * c * x1 * fx + 2.0 * ay * x2) * sn + (2.0 * ax * x1 - 2.0 * c * x2 * fy) * cs
        }
        MeasurementModel::PaperLiteral => {
            x5 + 2.0 * c * x1 * fx * cs + 2.0 * ax * x2 * cs + 2.0 * ay * x1 * sn
                - 2.0 * c * x2 * fy * sn
        }
    }
}

/// Analytic `dh/dX` of the selected model.
pub fn jacobian_c(s: &GekfState, p: &GekfParams, t_mid: f64) -> SMatrix<f64, 1, 5> {
    let (sn, cs) = (p.omega * t_mid).sin_cos();
    let (x1, x2) = (s.x[0], s.x[1]);
    let ([fx, fy], state_drive) = drive_terms(s, p);
    let [ax, ay] = p.amplitudes;
    let c = p.c;
    let (d1, d2, d5) = match p.model {
        MeasurementModel::Derived => (
            2.0 * c * fx * sn + 2.0 * ax * cs,
            2.0 * ay * sn - 2.0 * c * fy * cs,
            2.0 * c * x1 * sn - 2.0 * c * x2 * cs,
        ),
        MeasurementModel::PaperLiteral => (
            2.0 * c * fx * cs + 2.0 * ay * sn,
            2.0 * ax * cs - 2.0 * c * fy * sn,
            2.0 * c * x1 * cs - 2.0 * c * x2 * sn,
        ),
    };
    let d5 = if state_drive { 1.0 + d5 } else { 1.0 };
    SMatrix::<f64, 1, 5>::new(d1, d2, 0.0, 0.0, d5)
}

/// Scalar measurement update.
pub fn update(s: &GekfState, y: f64, p: &GekfParams, t_mid: f64) -> GekfState {
    let c = jacobian_c(s, p, t_mid);
    let innovation = y - h_measure(s, p, t_mid);
    let pct = s.p * c.transpose();
    let denom = p.r + (c * pct)[(0, 0)];
    let gain = pct / denom;
    let ikc = Matrix5::identity() - gain * c;
    let cov = if p.joseph {
        ikc * s.p * ikc.transpose() + gain * gain.transpose() * p.r
    } else {
        ikc * s.p
    };
    GekfState {
        x: s.x + gain * innovation,
        p: (cov + cov.transpose()) * 0.5,
    }
}

/// `(2 X1 / K, 2 X2 / K)`.
pub fn gradient_estimate(s: &GekfState, p: &GekfParams) -> Point {
    [2.0 * s.x[0] / p.k, 2.0 * s.x[1] / p.k]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LbsEstimate {
    pub j: [f64; 2],
    pub grad: Point,
}

/// `J_i = alpha_i * grad_i`.
pub fn lbs_estimate(grad: Point, alpha: [f64; 2]) -> LbsEstimate {
    LbsEstimate {
        j: [alpha[0] * grad[0], alpha[1] * grad[1]],
        grad,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::make_rng;
    use rand::Rng;

    fn params() -> GekfParams {
        GekfParams::new(&GekfSettings::known_objective(), 30.0, 0.3, [1.0, 1.0]).unwrap()
    }

    fn state(x: [f64; 5]) -> GekfState {
        GekfState::init(Vector5::from_row_slice(&x), Matrix5::identity() * 4.0).unwrap()
    }

    #[test]
    fn k_values() {
        assert!((compute_k(30.0, 0.1) - 2.0 / 30f64.sqrt() * 1.5f64.sin()).abs() < 1e-15);
        assert!((compute_k(30.0, 0.1) - 0.3643).abs() < 1e-4);
        assert!(compute_k(1.0, 2.0 * std::f64::consts::PI).abs() < 1e-15);
        assert!((compute_k(30.0, 1e-4) - 5.4772e-4).abs() < 1e-8);
        let mut s = GekfSettings::known_objective();
        s.t_out = 2.0 * std::f64::consts::PI / 30.0;
        assert!(GekfParams::new(&s, 30.0, 0.3, [1.0; 2]).is_err());
    }

    #[test]
    fn init_checks_psd() {
        let x = Vector5::new(0.0, 0.0, 0.0, 0.0, 8.0);
        assert!(GekfState::init(x, Matrix5::identity() * 4.0).is_ok());
        let mut bad = Matrix5::identity();
        bad[(2, 2)] = -1.0;
        assert!(matches!(
            GekfState::init(x, bad),
            Err(Error::NotPositiveSemiDefinite { .. })
        ));
        let s = GekfState::from_settings(&GekfSettings::known_objective(), 8.0).unwrap();
        assert_eq!(s.x, x);
    }

    #[test]
    fn prediction() {
        let p = params();
        let s = state([0.1, 0.2, 0.0, 0.0, 8.0]);
        assert_eq!(predict(&s, &p).x, s.x);

        let s = state([0.1, 0.2, 1.0, 0.0, 8.0]);
        let n = predict(&s, &p);
        assert!((n.x[0] - 0.2).abs() < 1e-15 && n.x[1] == 0.2);

        let mut q0 = p.clone();
        q0.q = Matrix5::zeros();
        let n = predict(&s, &q0);
        // no coupling into rows/columns 3..5
        for i in 0..5 {
            assert_eq!(n.p[(4, i)], s.p[(4, i)]);
            assert_eq!(n.p[(i, 4)], s.p[(i, 4)]);
        }
        assert_eq!(n.p[(2, 2)], 4.0);
        assert_eq!(n.p[(3, 3)], 4.0);
        // P11 += 2 P13 h + P33 h^2 per substep, starting from P13 = 0
        let h = 0.01;
        let mut p11 = 4.0;
        let mut p13 = 0.0;
        for _ in 0..10 {
            p11 += h * 2.0 * p13;
            p13 += h * 4.0;
        }
        assert!((n.p[(0, 0)] - p11).abs() < 1e-12);
    }

    #[test]
    fn measurement_models() {
        let p = params();
        let mut lit = p.clone();
        lit.model = MeasurementModel::PaperLiteral;
        let s = state([0.0, 0.0, 0.3, -0.2, 8.0]);
        for t in [0.0, 0.1, 0.77] {
            assert_eq!(h_measure(&s, &p, t), 8.0);
            assert_eq!(h_measure(&s, &lit, t), 8.0);
            assert_eq!(jacobian_c(&s, &p, t)[4], 1.0);
            assert_eq!(jacobian_c(&s, &lit, t)[4], 1.0);
        }

        let s = state([0.1, 0.2, 0.0, 0.0, 8.0]);
        assert!((h_measure(&s, &p, 0.0) - 7.24).abs() < 1e-12);

        // swapping sin and cos is the only difference: with symmetric
        // amplitudes and gradient the models meet where sin = cos
        let s = state([0.13, 0.13, 0.0, 0.0, 9.0]);
        let t = std::f64::consts::FRAC_PI_4 / p.omega;
        assert!((h_measure(&s, &p, t) - h_measure(&s, &lit, t)).abs() < 1e-12);
        let mut c0 = p.clone();
        c0.c = 0.0;
        let mut c0l = lit.clone();
        c0l.c = 0.0;
        assert!((h_measure(&s, &c0, 0.31) - h_measure(&s, &c0l, 0.31)).abs() < 1e-12);
        assert!((h_measure(&s, &p, 0.0) - h_measure(&s, &lit, 0.0)).abs() > 0.1);
    }

    #[test]
    fn literal_jacobian_entries() {
        let mut p = params();
        p.model = MeasurementModel::PaperLiteral;
        p.amplitudes = [0.7, 0.4];
        let s = state([0.1, -0.2, 0.0, 0.0, 9.0]);
        let t = 0.123;
        let (sn, cs) = (p.omega * t).sin_cos();
        let c = jacobian_c(&s, &p, t);
        assert!((c[0] - (2.0 * 0.3 * 9.0 * cs + 2.0 * 0.4 * sn)).abs() < 1e-12);
        assert!((c[1] - (2.0 * 0.7 * cs - 2.0 * 0.3 * 9.0 * sn)).abs() < 1e-12);
        assert!((c[4] - (1.0 + 2.0 * 0.3 * 0.1 * cs + 2.0 * 0.3 * 0.2 * sn)).abs() < 1e-12);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = make_rng(3);
        for model in [MeasurementModel::Derived, MeasurementModel::PaperLiteral] {
            for drive in [None, Some([0.4, -0.3])] {
                for _ in 0..100 {
                    let mut p = params();
                    p.model = model;
                    p.drive = drive;
                    p.amplitudes = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                    let x: [f64; 5] = std::array::from_fn(|_| rng.gen_range(-2.0..2.0));
                    let s = state(x);
                    let t = rng.gen_range(0.0..10.0);
                    let c = jacobian_c(&s, &p, t);
                    for i in 0..5 {
                        let h = 1e-6;
                        let (mut hi, mut lo) = (s.clone(), s.clone());
                        hi.x[i] += h;
                        lo.x[i] -= h;
                        let fd = (h_measure(&hi, &p, t) - h_measure(&lo, &p, t)) / (2.0 * h);
                        assert!((fd - c[i]).abs() <= 1e-6 * c[i].abs().max(1.0));
                    }
                }
            }
        }
    }

    #[test]
    fn update_cases() {
        let p = params();
        let s = state([0.1, 0.2, 0.0, 0.0, 8.0]);
        let y = h_measure(&s, &p, 0.05);
        let n = update(&s, y, &p, 0.05);
        assert_eq!(n.x, s.x);
        assert_ne!(n.p, s.p);

        // C = (0,0,0,0,1) with no excitation
        let mut q = p.clone();
        q.amplitudes = [0.0, 0.0];
        q.c = 0.0;
        q.r = 0.5;
        let s0 = state([0.0, 0.0, 0.0, 0.0, 8.0]);
        let n = update(&s0, 9.0, &q, 0.05);
        let l5 = 4.0 / 4.5;
        assert!((n.x[4] - (8.0 + l5)).abs() < 1e-12);
        assert!(n.x.rows(0, 4).iter().all(|v| *v == 0.0));

        let mut big = p.clone();
        big.r = 1e9;
        let n = update(&s, h_measure(&s, &p, 0.05) + 1.0, &big, 0.05);
        assert!((n.x - s.x).norm() < 1e-6);
    }

    #[test]
    fn joseph_matches_standard_form() {
        let p = params();
        let mut j = p.clone();
        j.joseph = true;
        let s = state([0.1, 0.2, 0.0, 0.0, 8.0]);
        let a = update(&s, 7.5, &p, 0.05);
        let b = update(&s, 7.5, &j, 0.05);
        assert!((a.p - b.p).amax() < 1e-10);
        assert_eq!(a.x, b.x);
    }

    #[test]
    fn gradient_and_lbs_estimate() {
        let p = params();
        let s = state([0.0, 0.0, 0.0, 0.0, 8.0]);
        assert_eq!(gradient_estimate(&s, &p), [0.0, 0.0]);
        let s = state([-p.k / 2.0, -3.0 * p.k / 2.0, 0.0, 0.0, 8.0]);
        let g = gradient_estimate(&s, &p);
        assert!((g[0] + 1.0).abs() < 1e-12 && (g[1] + 3.0).abs() < 1e-12);

        assert_eq!(lbs_estimate([0.0, 0.0], p.alpha).j, [0.0, 0.0]);
        let e = lbs_estimate([-1.0, -3.0], [0.15, 0.15]);
        assert!((e.j[0] + 0.15).abs() < 1e-15 && (e.j[1] + 0.45).abs() < 1e-15);
        let d = lbs_estimate([-1.0, -3.0], [0.3, 0.3]);
        assert_eq!(d.j, [2.0 * e.j[0], 2.0 * e.j[1]]);
    }
}
