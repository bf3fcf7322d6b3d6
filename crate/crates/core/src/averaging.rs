//! Lie-bracket averaging machinery.
//!
//! The oscillatory controller `x' = sum_i b_i(x) sqrt(w) u_i(wt)` is
//! approximated by the Lie bracket system `z' = sum_{i<j} [b_i, b_j](z) nu_{j,i}`
//! where `nu_{j,i} = (1/T) int_0^T u_j(s) int_0^s u_i(r) dr ds`. This module
//! provides the pieces generically (dithers, the nu quadrature, numerical
//! brackets) and specialises them to the planar single-integrator, giving a
//! reference trajectory for averaging checks.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::esc::EscParams;
use crate::field::ScalarField;
use crate::sim::rk4_step;
use crate::Point;

/// Panels per period for the nu quadrature.
pub const NU_PANELS: usize = 10_000;
/// Finite-difference step for bracket Jacobians.
pub const JACOBIAN_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DitherShape {
    Sin,
    Cos,
}

/// Periodic zero-mean excitation `sin(wt)` or `cos(wt)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dither {
    pub shape: DitherShape,
    pub omega: f64,
}

impl Dither {
    pub fn sin(omega: f64) -> Self {
        Self {
            shape: DitherShape::Sin,
            omega,
        }
    }

    pub fn cos(omega: f64) -> Self {
        Self {
            shape: DitherShape::Cos,
            omega,
        }
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self.shape {
            DitherShape::Sin => (self.omega * t).sin(),
            DitherShape::Cos => (self.omega * t).cos(),
        }
    }
}

/// `dither_eval` as a free function.
pub fn dither_eval(d: &Dither, t: f64) -> f64 {
    d.eval(t)
}

/// Nested-integral average `(1/T) int_0^T u_j(s) int_0^s u_i(r) dr ds`,
/// composite Simpson with [`NU_PANELS`] panels.
pub fn nu(u_j: &Dither, u_i: &Dither, period: f64) -> Result<f64> {
    let same = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
    if !(period > 0.0) || !same(u_j.period(), period) || !same(u_i.period(), period) {
        return Err(Error::param(
            "period",
            format!(
                "dithers have periods {} and {}, quadrature asked for {}",
                u_j.period(),
                u_i.period(),
                period
            ),
        ));
    }
    let n = NU_PANELS;
    let h = period / n as f64;

    // inner integral at every node, one Simpson panel at a time
    let mut inner = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    inner.push(acc);
    for k in 0..n {
        let a = k as f64 * h;
        acc += h / 6.0 * (u_i.eval(a) + 4.0 * u_i.eval(a + 0.5 * h) + u_i.eval(a + h));
        inner.push(acc);
    }

    let g = |k: usize| u_j.eval(k as f64 * h) * inner[k];
    let mut sum = g(0) + g(n);
    for k in 1..n {
        sum += if k % 2 == 1 { 4.0 * g(k) } else { 2.0 * g(k) };
    }
    Ok(sum * h / 3.0 / period)
}

/// A planar vector field `p -> g(p)`.
pub trait PlanarVectorField {
    fn eval(&self, p: Point) -> Point;
}

impl<F: Fn(Point) -> Point> PlanarVectorField for F {
    fn eval(&self, p: Point) -> Point {
        self(p)
    }
}

fn jacobian_times(g: &dyn PlanarVectorField, p: Point, v: Point) -> Point {
    let h = JACOBIAN_STEP;
    let mut col = [[0.0; 2]; 2];
    for (k, c) in col.iter_mut().enumerate() {
        let mut hi = p;
        let mut lo = p;
        hi[k] += h;
        lo[k] -= h;
        let (a, b) = (g.eval(hi), g.eval(lo));
        *c = [(a[0] - b[0]) / (2.0 * h), (a[1] - b[1]) / (2.0 * h)];
    }
    [
        col[0][0] * v[0] + col[1][0] * v[1],
        col[0][1] * v[0] + col[1][1] * v[1],
    ]
}

/// `[g_i, g_j](p) = (dg_j/dp) g_i - (dg_i/dp) g_j`, with central-difference
/// Jacobians.
pub fn lie_bracket(g_i: &dyn PlanarVectorField, g_j: &dyn PlanarVectorField, p: Point) -> Point {
    let a = jacobian_times(g_j, p, g_i.eval(p));
    let b = jacobian_times(g_i, p, g_j.eval(p));
    [a[0] - b[0], a[1] - b[1]]
}

/// Constants of the gradient-form LBS estimate and the working box used for
/// the boundedness diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LbsParams {
    pub alpha: [f64; 2],
    /// `[[x_min, x_max], [y_min, y_max]]`.
    pub working_box: [[f64; 2]; 2],
}

impl LbsParams {
    pub fn new(alpha: [f64; 2], working_box: [[f64; 2]; 2]) -> Result<Self> {
        if !alpha.iter().all(|a| a.is_finite()) {
            return Err(Error::param("alpha", "must be finite"));
        }
        for (axis, r) in working_box.iter().enumerate() {
            if !(r[0].is_finite() && r[1].is_finite() && r[1] > r[0]) {
                return Err(Error::param(
                    "working_box",
                    format!("axis {axis} range {r:?} is degenerate"),
                ));
            }
        }
        Ok(Self { alpha, working_box })
    }

    /// Pure-gradient approximation `alpha * grad f`.
    pub fn gradient_form(&self, p: Point, field: &ScalarField, t: f64) -> Point {
        let g = field.grad(p, t);
        [self.alpha[0] * g[0], self.alpha[1] * g[1]]
    }
}

/// The planar single-integrator Lie bracket system with nu precomputed.
#[derive(Debug, Clone)]
pub struct LieBracketSystem {
    omega: f64,
    c: f64,
    nu_cos_sin: f64,
}

impl LieBracketSystem {
    pub fn new(esc: &EscParams) -> Result<Self> {
        let (s, c) = (Dither::sin(esc.omega), Dither::cos(esc.omega));
        Ok(Self {
            omega: esc.omega,
            c: esc.c,
            nu_cos_sin: nu(&c, &s, s.period())?,
        })
    }

    /// Control vector fields paired with `sin` and `cos`, including the
    /// `sqrt(w)` factor: `g_sin = sqrt(w) (c f, a_y)`, `g_cos = sqrt(w) (a_x, -c f)`.
    pub fn fields<'a>(
        &'a self,
        field: &'a ScalarField,
        amplitudes: [f64; 2],
        t: f64,
    ) -> (impl Fn(Point) -> Point + 'a, impl Fn(Point) -> Point + 'a) {
        let sw = self.omega.sqrt();
        let c = self.c;
        let g_sin = move |p: Point| [sw * c * field.eval(p, t), sw * amplitudes[1]];
        let g_cos = move |p: Point| [sw * amplitudes[0], -sw * c * field.eval(p, t)];
        (g_sin, g_cos)
    }

    pub fn rhs(&self, p: Point, field: &ScalarField, amplitudes: [f64; 2], t: f64) -> Point {
        let (g_sin, g_cos) = self.fields(field, amplitudes, t);
        let b = lie_bracket(&g_sin, &g_cos, p);
        [b[0] * self.nu_cos_sin, b[1] * self.nu_cos_sin]
    }
}

/// Right-hand side of the averaged system at `p`, amplitudes frozen.
pub fn lbs_rhs(
    p: Point,
    field: &ScalarField,
    esc: &EscParams,
    amplitudes: [f64; 2],
    t: f64,
) -> Result<Point> {
    Ok(LieBracketSystem::new(esc)?.rhs(p, field, amplitudes, t))
}

/// RK4 integration of the averaged system with the initial amplitudes of
/// `esc`. Returns `(t, position)` samples including both endpoints.
pub fn simulate_lbs(
    p0: Point,
    field: &ScalarField,
    esc: &EscParams,
    duration: f64,
    step: f64,
) -> Result<Vec<(f64, Point)>> {
    if !(step > 0.0) {
        return Err(Error::param("step", "must be positive"));
    }
    let sys = LieBracketSystem::new(esc)?;
    let a = esc.a0;
    let steps = (duration / step).round().max(0.0) as usize;
    let mut out = Vec::with_capacity(steps + 1);
    let mut p = p0;
    out.push((0.0, p));
    for k in 0..steps {
        let t = k as f64 * step;
        p = rk4_step(p, |tt, s: &Point| sys.rhs(*s, field, a, tt), t, step);
        let t1 = (k + 1) as f64 * step;
        if !p.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                t: t1,
                what: "averaged trajectory".into(),
            });
        }
        out.push((t1, p));
    }
    Ok(out)
}

/// Sampled suprema over the working box of `|b|`, `|db/dp|` and
/// `|d[b_sin, b_cos]/dp|` for the control vector fields (without the
/// `sqrt(w)` factor). Empirical stand-ins for the boundedness constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxBounds {
    pub field_sup: f64,
    pub jacobian_sup: f64,
    pub bracket_jacobian_sup: f64,
}

pub fn box_bounds(
    field: &ScalarField,
    esc: &EscParams,
    lbs: &LbsParams,
    amplitudes: [f64; 2],
    grid: usize,
    t: f64,
) -> BoxBounds {
    let c = esc.c;
    let b_sin = move |p: Point| [c * field.eval(p, t), amplitudes[1]];
    let b_cos = move |p: Point| [amplitudes[0], -c * field.eval(p, t)];
    let bracket = |p: Point| lie_bracket(&b_sin, &b_cos, p);
    let norm = |v: Point| v[0].hypot(v[1]);
    // looser step for the nested difference
    let jac_sup = |g: &dyn Fn(Point) -> Point, p: Point, h: f64| {
        let mut m: f64 = 0.0;
        for k in 0..2 {
            let mut hi = p;
            let mut lo = p;
            hi[k] += h;
            lo[k] -= h;
            let (a, b) = (g(hi), g(lo));
            m = m.max(((a[0] - b[0]) / (2.0 * h)).abs());
            m = m.max(((a[1] - b[1]) / (2.0 * h)).abs());
        }
        m
    };

    let n = grid.max(2);
    let [[x0, x1], [y0, y1]] = lbs.working_box;
    let mut out = BoxBounds {
        field_sup: 0.0,
        jacobian_sup: 0.0,
        bracket_jacobian_sup: 0.0,
    };
    for i in 0..n {
        for j in 0..n {
            let p = [
                x0 + (x1 - x0) * i as f64 / (n - 1) as f64,
                y0 + (y1 - y0) * j as f64 / (n - 1) as f64,
            ];
            out.field_sup = out.field_sup.max(norm(b_sin(p))).max(norm(b_cos(p)));
            out.jacobian_sup = out
                .jacobian_sup
                .max(jac_sup(&b_sin, p, JACOBIAN_STEP))
                .max(jac_sup(&b_cos, p, JACOBIAN_STEP));
            out.bracket_jacobian_sup = out.bracket_jacobian_sup.max(jac_sup(&bracket, p, 1e-3));
        }
    }
    out
}
