//! Scalar objective fields and the noisy point sensor that samples them.
//!
//! Three shapes are available: a concave quadratic, a Gaussian intensity
//! bump (the default stand-in for a light source), and a clamped
//! inverse-square law. Any shape can be relocated over time by a list of
//! waypoints; relocation is an instantaneous translation of the centre.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Point;

/// Step used for central finite-difference gradients, in position units.
pub const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    Quadratic,
    Gaussian,
    InverseSquare,
}

/// A source relocation: from `time` on the extremum sits at `center`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub time: f64,
    pub center: Point,
}

/// Declarative description of a field, as found in scenario files.
///
/// Which of the optional keys are required depends on `kind`:
/// `weights` for quadratic, `width` for gaussian, `clamp_radius` for
/// inverse-square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub kind: FieldKind,
    /// f* for the quadratic, peak intensity for the other shapes.
    pub peak: f64,
    pub center: Point,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clamp_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub waypoints: Vec<Waypoint>,
}

impl FieldSpec {
    /// `f = peak - wx (x - cx)^2 - wy (y - cy)^2`.
    pub fn quadratic(peak: f64, center: Point, weights: [f64; 2]) -> Self {
        Self {
            kind: FieldKind::Quadratic,
            peak,
            center,
            weights: Some(weights),
            width: None,
            clamp_radius: None,
            waypoints: Vec::new(),
        }
    }

    /// `f = peak * exp(-|p - c|^2 / (2 width^2))`.
    pub fn gaussian(peak: f64, center: Point, width: f64) -> Self {
        Self {
            kind: FieldKind::Gaussian,
            peak,
            center,
            weights: None,
            width: Some(width),
            clamp_radius: None,
            waypoints: Vec::new(),
        }
    }

    /// `f = peak * r0^2 / max(|p - c|^2, r0^2)`.
    pub fn inverse_square(peak: f64, center: Point, clamp_radius: f64) -> Self {
        Self {
            kind: FieldKind::InverseSquare,
            peak,
            center,
            weights: None,
            width: None,
            clamp_radius: Some(clamp_radius),
            waypoints: Vec::new(),
        }
    }

    pub fn with_waypoints(mut self, waypoints: Vec<Waypoint>) -> Self {
        self.waypoints = waypoints;
        self
    }

    /// The field used in the known-objective simulation:
    /// `10 - (x-1)^2/2 - 3(y-1)^2/2`.
    pub fn known_objective() -> Self {
        Self::quadratic(10.0, [1.0, 1.0], [0.5, 1.5])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shape {
    Quadratic { weights: [f64; 2] },
    Gaussian { width: f64 },
    InverseSquare { clamp_radius: f64 },
}

/// Immutable objective field `f(p, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    shape: Shape,
    peak: f64,
    base_center: Point,
    waypoints: Vec<Waypoint>,
}

/// Validates a description and builds the field.
pub fn build_field(spec: &FieldSpec) -> Result<ScalarField> {
    let finite = |v: f64, name: &str| {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::InvalidField(format!("{name} must be finite")))
        }
    };
    finite(spec.peak, "peak")?;
    finite(spec.center[0], "center")?;
    finite(spec.center[1], "center")?;

    let shape = match spec.kind {
        FieldKind::Quadratic => {
            let w = spec
                .weights
                .ok_or_else(|| Error::InvalidField("quadratic field needs `weights`".into()))?;
            if !(w[0] > 0.0 && w[1] > 0.0) || !w.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidField(format!(
                    "curvature weights must be positive, got {w:?}"
                )));
            }
            Shape::Quadratic { weights: w }
        }
        FieldKind::Gaussian => {
            let width = spec
                .width
                .ok_or_else(|| Error::InvalidField("gaussian field needs `width`".into()))?;
            if !(width > 0.0 && width.is_finite()) {
                return Err(Error::InvalidField(format!(
                    "gaussian width must be positive, got {width}"
                )));
            }
            Shape::Gaussian { width }
        }
        FieldKind::InverseSquare => {
            let r = spec.clamp_radius.ok_or_else(|| {
                Error::InvalidField("inverse-square field needs `clamp_radius`".into())
            })?;
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::InvalidField(format!(
                    "clamp radius must be positive, got {r}"
                )));
            }
            Shape::InverseSquare { clamp_radius: r }
        }
    };

    for pair in spec.waypoints.windows(2) {
        if !(pair[1].time > pair[0].time) {
            return Err(Error::InvalidField(format!(
                "waypoint times must be strictly increasing ({} then {})",
                pair[0].time, pair[1].time
            )));
        }
    }
    for w in &spec.waypoints {
        if !w.time.is_finite() || !w.center.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidField("waypoints must be finite".into()));
        }
    }

    Ok(ScalarField {
        shape,
        peak: spec.peak,
        base_center: spec.center,
        waypoints: spec.waypoints.clone(),
    })
}

impl ScalarField {
    /// Location of the extremum active at time `t`.
    pub fn extremum_at(&self, t: f64) -> Point {
        self.waypoints
            .iter()
            .take_while(|w| w.time <= t)
            .last()
            .map_or(self.base_center, |w| w.center)
    }

    pub fn eval(&self, p: Point, t: f64) -> f64 {
        let c = self.extremum_at(t);
        let (dx, dy) = (p[0] - c[0], p[1] - c[1]);
        match self.shape {
            Shape::Quadratic { weights } => {
                self.peak - weights[0] * dx * dx - weights[1] * dy * dy
            }
            Shape::Gaussian { width } => {
                self.peak * (-(dx * dx + dy * dy) / (2.0 * width * width)).exp()
            }
            Shape::InverseSquare { clamp_radius } => {
                let r0 = clamp_radius * clamp_radius;
                self.peak * r0 / (dx * dx + dy * dy).max(r0)
            }
        }
    }

    /// Gradient in position. Analytic for the quadratic and Gaussian
    /// shapes; central differences for the clamped inverse-square law.
    pub fn grad(&self, p: Point, t: f64) -> Point {
        let c = self.extremum_at(t);
        let (dx, dy) = (p[0] - c[0], p[1] - c[1]);
        match self.shape {
            Shape::Quadratic { weights } => [-2.0 * weights[0] * dx, -2.0 * weights[1] * dy],
            Shape::Gaussian { width } => {
                let s = -self.eval(p, t) / (width * width);
                [s * dx, s * dy]
            }
            Shape::InverseSquare { .. } => self.fd_grad(p, t),
        }
    }

    pub(crate) fn fd_grad(&self, p: Point, t: f64) -> Point {
        let h = FD_STEP;
        let gx = (self.eval([p[0] + h, p[1]], t) - self.eval([p[0] - h, p[1]], t)) / (2.0 * h);
        let gy = (self.eval([p[0], p[1] + h], t) - self.eval([p[0], p[1] - h], t)) / (2.0 * h);
        [gx, gy]
    }

    /// Value at the extremum, f*.
    pub fn peak(&self) -> f64 {
        self.peak
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }
}

/// Additive Gaussian point sensor with its own seeded stream.
#[derive(Debug, Clone)]
pub struct SensorModel {
    noise_std: f64,
    rng: ChaCha8Rng,
}

impl SensorModel {
    pub fn new(noise_std: f64, rng: ChaCha8Rng) -> Result<Self> {
        if !(noise_std >= 0.0 && noise_std.is_finite()) {
            return Err(Error::param("noise_std", "must be finite and >= 0"));
        }
        Ok(Self { noise_std, rng })
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    /// `f(p, t)` plus one draw of N(0, noise_std^2). A noiseless sensor
    /// does not consume the stream.
    pub fn measure(&mut self, field: &ScalarField, p: Point, t: f64) -> f64 {
        let f = field.eval(p, t);
        if self.noise_std == 0.0 {
            return f;
        }
        let normal = Normal::new(0.0, self.noise_std).expect("validated std");
        f + normal.sample(&mut self.rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::make_rng;
    use rand::Rng;

    fn known() -> ScalarField {
        build_field(&FieldSpec::known_objective()).unwrap()
    }

    #[test]
    fn quadratic_peak_and_offset_value() {
        let f = known();
        assert_eq!(f.eval([1.0, 1.0], 0.0), 10.0);
        assert_eq!(f.eval([2.0, 2.0], 0.0), 8.0);
        assert_eq!(f.extremum_at(123.0), [1.0, 1.0]);
    }

    #[test]
    fn quadratic_gradient_matches_hand_and_fd() {
        let f = known();
        assert_eq!(f.grad([1.0, 1.0], 0.0), [0.0, 0.0]);
        assert_eq!(f.grad([2.0, 2.0], 0.0), [-1.0, -3.0]);
        let fd = f.fd_grad([2.0, 2.0], 0.0);
        assert!((fd[0] + 1.0).abs() < 1e-8 && (fd[1] + 3.0).abs() < 1e-8);
    }

    #[test]
    fn gaussian_peak_and_gradient_against_fd() {
        let f = build_field(&FieldSpec::gaussian(5.0, [0.0, 0.0], 0.8)).unwrap();
        assert_eq!(f.eval([0.0, 0.0], 0.0), 5.0);
        let mut rng = make_rng(11);
        for _ in 0..100 {
            let p = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let a = f.grad(p, 0.0);
            let n = f.fd_grad(p, 0.0);
            assert!((a[0] - n[0]).abs() < 1e-6 && (a[1] - n[1]).abs() < 1e-6, "{p:?}");
        }
    }

    #[test]
    fn inverse_square_is_clamped() {
        let f = build_field(&FieldSpec::inverse_square(4.0, [0.0, 0.0], 0.5)).unwrap();
        assert_eq!(f.eval([0.1, 0.0], 0.0), 4.0);
        assert!((f.eval([1.0, 0.0], 0.0) - 1.0).abs() < 1e-15);
        assert_eq!(f.grad([0.0, 0.0], 0.0), [0.0, 0.0]);
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = FieldSpec::known_objective();
        s.weights = Some([0.0, 1.0]);
        assert!(build_field(&s).is_err());
        assert!(build_field(&FieldSpec::gaussian(1.0, [0.0, 0.0], -1.0)).is_err());
        let s = FieldSpec::known_objective().with_waypoints(vec![
            Waypoint { time: 10.0, center: [0.0, 0.0] },
            Waypoint { time: 5.0, center: [1.0, 0.0] },
        ]);
        assert!(matches!(build_field(&s), Err(Error::InvalidField(_))));
        let mut s = FieldSpec::gaussian(1.0, [0.0, 0.0], 1.0);
        s.width = None;
        assert!(build_field(&s).is_err());
    }

    #[test]
    fn moving_source_schedule() {
        let f = build_field(&FieldSpec::known_objective().with_waypoints(vec![Waypoint {
            time: 20.0,
            center: [3.0, 0.0],
        }]))
        .unwrap();
        assert_eq!(f.extremum_at(25.0), [3.0, 0.0]);
        assert_eq!(f.extremum_at(19.999), [1.0, 1.0]);
        assert_eq!(f.extremum_at(20.0), [3.0, 0.0]);
        // pure translation across the switch
        let p = [0.3, -0.7];
        let shifted = [p[0] + 2.0, p[1] - 1.0];
        assert!((f.eval(p, 10.0) - f.eval(shifted, 30.0)).abs() < 1e-12);
        assert_eq!(f.grad(f.extremum_at(30.0), 30.0), [0.0, 0.0]);
    }

    #[test]
    fn noiseless_sensor_is_exact() {
        let f = known();
        let mut s = SensorModel::new(0.0, make_rng(1)).unwrap();
        assert_eq!(s.measure(&f, [2.0, 2.0], 0.0), 8.0);
        assert!(SensorModel::new(-1.0, make_rng(1)).is_err());
    }

    #[test]
    fn sensor_is_deterministic_per_seed() {
        let f = known();
        let mut a = SensorModel::new(0.3, make_rng(5)).unwrap();
        let mut b = SensorModel::new(0.3, make_rng(5)).unwrap();
        for i in 0..50 {
            let p = [i as f64 * 0.01, 1.0];
            assert_eq!(a.measure(&f, p, 0.0).to_bits(), b.measure(&f, p, 0.0).to_bits());
        }
    }

    #[test]
    fn sensor_mean_converges() {
        let f = known();
        let mut s = SensorModel::new(1.0, make_rng(2024)).unwrap();
        let n = 100_000;
        let mean = (0..n).map(|_| s.measure(&f, [2.0, 2.0], 0.0)).sum::<f64>() / n as f64;
        assert!((mean - 8.0).abs() < 0.02, "mean {mean}");
    }
}
