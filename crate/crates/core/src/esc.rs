//! The planar single-integrator controller with amplitude adaptation.
//!
//! ```text
//! x'   =  c f sqrt(w) sin(wt) + a_x sqrt(w) cos(wt)
//! y'   = -c f sqrt(w) cos(wt) + a_y sqrt(w) sin(wt)
//! a_x' = -l_x (a_x - J_x)
//! a_y' = -l_y (a_y - J_y)
//! ```
//!
//! The constant-amplitude baseline is the same system with `a' = 0`.
//! First-order washout filters with corners `h1`, `h2` (rad/s) sit either on
//! the measurement driving each channel or on the `J` signals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::rk4_step;
use crate::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    GekfAdaptive,
    BaselineConstant,
}

/// Where the per-channel filters act.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterTarget {
    /// On the objective measurement feeding the `c f` term of each channel.
    Measurement,
    /// On `J_x`, `J_y` before the adaptation law.
    JSignal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterKind {
    /// `s / (s + h)`
    HighPass,
    /// `h / (s + h)`
    LowPass,
}

/// What the amplitude relaxes towards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdaptTarget {
    /// `a' = -l (a - |J|)`
    Magnitude,
    /// `a' = -l (a - J)`
    Signed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EscParams {
    /// Dither frequency, rad/s.
    pub omega: f64,
    pub c: f64,
    /// Adaptation rates `[l_x, l_y]`, 1/s. Unused by the baseline.
    #[serde(default)]
    pub lambda: [f64; 2],
    /// Initial (baseline: constant) amplitudes `[a_x, a_y]`.
    pub a0: [f64; 2],
    pub variant: Variant,
    /// Filter corners `[h1, h2]` in rad/s; 0 disables a channel's filter.
    #[serde(default)]
    pub filter_corners: [f64; 2],
    #[serde(default = "default_filter_target")]
    pub filter_target: FilterTarget,
    #[serde(default = "default_filter_kind")]
    pub filter_kind: FilterKind,
    #[serde(default = "default_adapt_target")]
    pub adapt_target: AdaptTarget,
}

fn default_filter_target() -> FilterTarget {
    FilterTarget::Measurement
}

fn default_filter_kind() -> FilterKind {
    FilterKind::HighPass
}

fn default_adapt_target() -> AdaptTarget {
    AdaptTarget::Magnitude
}

impl EscParams {
    /// Controller settings of the known-objective simulation.
    pub fn known_objective(variant: Variant) -> Self {
        let adaptive = variant == Variant::GekfAdaptive;
        Self {
            omega: 30.0,
            c: 0.3,
            lambda: [0.015, 0.0995],
            a0: [1.0, 1.0],
            variant,
            filter_corners: if adaptive { [1.0, 1.0] } else { [0.0, 0.0] },
            filter_target: FilterTarget::Measurement,
            filter_kind: FilterKind::HighPass,
            adapt_target: AdaptTarget::Magnitude,
        }
    }

    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(Error::param("omega", format!("must be > 0, got {}", self.omega)));
        }
        if !self.c.is_finite() {
            return Err(Error::param("c", "must be finite"));
        }
        if !self.a0.iter().all(|a| a.is_finite()) {
            return Err(Error::param("a0", "must be finite"));
        }
        if self.variant == Variant::GekfAdaptive
            && !self.lambda.iter().all(|l| *l > 0.0 && l.is_finite())
        {
            return Err(Error::param(
                "lambda",
                format!("adaptive variant needs positive rates, got {:?}", self.lambda),
            ));
        }
        if !self.filter_corners.iter().all(|h| *h >= 0.0 && h.is_finite()) {
            return Err(Error::param(
                "filter_corners",
                format!("must be >= 0, got {:?}", self.filter_corners),
            ));
        }
        Ok(())
    }

    fn filters_on(&self, target: FilterTarget) -> bool {
        self.filter_target == target && self.filter_corners.iter().any(|h| *h > 0.0)
    }

    /// True when the `c f` terms are driven by a filtered measurement.
    pub fn filters_measurement(&self) -> bool {
        self.filters_on(FilterTarget::Measurement)
    }
}

/// Internal state of one first-order filter channel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WashoutState {
    pub prev_input: f64,
    pub output: f64,
}

impl WashoutState {
    /// A filter that has been seeing `input` forever: a high-pass outputs 0,
    /// a low-pass outputs `input`.
    pub fn settled(input: f64, kind: FilterKind) -> Self {
        Self {
            prev_input: input,
            output: match kind {
                FilterKind::HighPass => 0.0,
                FilterKind::LowPass => input,
            },
        }
    }
}

/// Backward-Euler step of `s/(s+h)`; `h = 0` passes the input through.
pub fn washout_step(state: WashoutState, input: f64, corner: f64, dt: f64) -> (WashoutState, f64) {
    filter_step(state, input, corner, dt, FilterKind::HighPass)
}

/// Backward-Euler step of the selected first-order filter.
pub fn filter_step(
    state: WashoutState,
    input: f64,
    corner: f64,
    dt: f64,
    kind: FilterKind,
) -> (WashoutState, f64) {
    if corner == 0.0 {
        return (
            WashoutState {
                prev_input: input,
                output: input,
            },
            input,
        );
    }
    let k = 1.0 + corner * dt;
    let out = match kind {
        FilterKind::HighPass => (state.output + input - state.prev_input) / k,
        FilterKind::LowPass => (state.output + corner * dt * input) / k,
    };
    (
        WashoutState {
            prev_input: input,
            output: out,
        },
        out,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscState {
    pub position: Point,
    pub amplitudes: [f64; 2],
    pub filters: [WashoutState; 2],
}

impl EscState {
    /// Filters start at rest.
    pub fn new(position: Point, params: &EscParams) -> Self {
        Self {
            position,
            amplitudes: params.a0,
            filters: [WashoutState::default(); 2],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().chain(&self.amplitudes).all(|v| v.is_finite())
            && self
                .filters
                .iter()
                .all(|f| f.output.is_finite() && f.prev_input.is_finite())
    }
}

/// Position derivative with separate `f` drives for the two channels.
pub fn position_rhs(
    amplitudes: [f64; 2],
    drive: [f64; 2],
    params: &EscParams,
    t: f64,
) -> Point {
    let sw = params.omega.sqrt();
    let (s, c) = (params.omega * t).sin_cos();
    [
        params.c * drive[0] * sw * s + amplitudes[0] * sw * c,
        -params.c * drive[1] * sw * c + amplitudes[1] * sw * s,
    ]
}

/// `(x', y')` for measurement `f_meas` on both channels.
pub fn esc_rhs(s: &EscState, f_meas: f64, params: &EscParams, t: f64) -> Point {
    position_rhs(s.amplitudes, [f_meas, f_meas], params, t)
}

/// `-l (a - J)`.
pub fn adaptation_rhs(a: f64, j: f64, lambda: f64) -> f64 {
    -lambda * (a - j)
}

/// Signals actually used during one controller step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSignals {
    /// Mean over the step of the `f` driving the `c f` term of each channel.
    pub drive: [f64; 2],
    /// Adaptation targets after filtering and the sign rule.
    pub target: [f64; 2],
}

/// One RK4 step of `(x, y, a_x, a_y)`. Measurement and `J` are held over
/// the step; filters advance once per step.
pub fn controller_step(
    s: &EscState,
    f_meas: f64,
    j: [f64; 2],
    params: &EscParams,
    t: f64,
    dt: f64,
) -> Result<EscState> {
    controller_step_with_signals(s, f_meas, j, params, t, dt).map(|(s, _)| s)
}

pub fn controller_step_with_signals(
    s: &EscState,
    f_meas: f64,
    j: [f64; 2],
    params: &EscParams,
    t: f64,
    dt: f64,
) -> Result<(EscState, StepSignals)> {
    controller_step_tracking(s, f_meas, |_, _| f_meas, j, params, t, dt)
}

/// Like [`controller_step_with_signals`], but the objective is re-read at
/// every RK4 stage through `measure(position, t)`; `f_meas` is the reading
/// at the start of the step and feeds the filters. A high-pass filter's
/// slow part is held over the step while the fast part follows `measure`.
pub fn controller_step_tracking(
    s: &EscState,
    f_meas: f64,
    measure: impl Fn(Point, f64) -> f64,
    j: [f64; 2],
    params: &EscParams,
    t: f64,
    dt: f64,
) -> Result<(EscState, StepSignals)> {
    let mut next = *s;
    let mut jf = j;
    if dt == 0.0 {
        return Ok((
            next,
            StepSignals {
                drive: [f_meas; 2],
                target: j,
            },
        ));
    }

    // drive(f) = gain * f + offset per channel
    let mut gain = [1.0; 2];
    let mut offset = [0.0; 2];
    let filter_meas = params.filter_target == FilterTarget::Measurement;
    for ch in 0..2 {
        let input = if filter_meas { f_meas } else { j[ch] };
        let corner = params.filter_corners[ch];
        let (state, out) = filter_step(s.filters[ch], input, corner, dt, params.filter_kind);
        next.filters[ch] = state;
        if !filter_meas {
            jf[ch] = out;
        } else if corner > 0.0 {
            match params.filter_kind {
                FilterKind::HighPass => offset[ch] = out - f_meas,
                FilterKind::LowPass => (gain[ch], offset[ch]) = (0.0, out),
            }
        }
    }

    let adaptive = params.variant == Variant::GekfAdaptive;
    let target = match params.adapt_target {
        AdaptTarget::Magnitude => [jf[0].abs(), jf[1].abs()],
        AdaptTarget::Signed => jf,
    };
    // the last two components integrate the drive over the step
    let y0 = [s.position[0], s.position[1], s.amplitudes[0], s.amplitudes[1], 0.0, 0.0];
    let y1 = rk4_step(
        y0,
        |tt, y: &[f64; 6]| {
            let f = measure([y[0], y[1]], tt);
            let drive = [gain[0] * f + offset[0], gain[1] * f + offset[1]];
            let v = position_rhs([y[2], y[3]], drive, params, tt);
            let da = if adaptive {
                [
                    adaptation_rhs(y[2], target[0], params.lambda[0]),
                    adaptation_rhs(y[3], target[1], params.lambda[1]),
                ]
            } else {
                [0.0, 0.0]
            };
            [v[0], v[1], da[0], da[1], drive[0], drive[1]]
        },
        t,
        dt,
    );
    next.position = [y1[0], y1[1]];
    next.amplitudes = [y1[2], y1[3]];
    if !next.is_finite() {
        return Err(Error::NonFinite {
            t: t + dt,
            what: format!("controller state {:?}", &y1[..4]),
        });
    }
    let drive = [y1[4] / dt, y1[5] / dt];
    Ok((next, StepSignals { drive, target }))
}
