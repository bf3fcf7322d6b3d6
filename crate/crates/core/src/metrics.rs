//! Post-processing of trajectory records.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::esc::Variant;
use crate::field::build_field;
use crate::sim::{Scenario, TrajectoryRecord};
use crate::Point;

/// Relative slack allowed when comparing `|J|` against `1/t^p`.
const BOUND_SLACK: f64 = 1e-12;

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Time, measured from the first sample, after which the trajectory stays
/// strictly inside the `eps`-ball around `target`. `None` if the last
/// sample is outside.
pub fn convergence_time(times: &[f64], positions: &[Point], target: Point, eps: f64) -> Option<f64> {
    let t0 = *times.first()?;
    match positions.iter().rposition(|p| dist(*p, target) >= eps) {
        None => Some(0.0),
        Some(i) if i + 1 == positions.len() => None,
        Some(i) => Some(times[i + 1] - t0),
    }
}

/// Peak-to-peak value over each window `[t_i, t_i + window]` that fits
/// inside the series. Entry `i` belongs to the window starting at `t_i`.
pub fn envelope(times: &[f64], values: &[f64], window: f64) -> Vec<f64> {
    let n = times.len().min(values.len());
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    let end = times[n - 1];
    let mut max_q: VecDeque<usize> = VecDeque::new();
    let mut min_q: VecDeque<usize> = VecDeque::new();
    let mut hi = 0;
    for lo in 0..n {
        if times[lo] + window > end + 1e-12 * window.abs().max(1.0) {
            break;
        }
        while hi < n && times[hi] <= times[lo] + window + 1e-12 * window.abs().max(1.0) {
            while max_q.back().is_some_and(|&j| values[j] <= values[hi]) {
                max_q.pop_back();
            }
            max_q.push_back(hi);
            while min_q.back().is_some_and(|&j| values[j] >= values[hi]) {
                min_q.pop_back();
            }
            min_q.push_back(hi);
            hi += 1;
        }
        while max_q.front().is_some_and(|&j| j < lo) {
            max_q.pop_front();
        }
        while min_q.front().is_some_and(|&j| j < lo) {
            min_q.pop_front();
        }
        out.push(values[max_q[0]] - values[min_q[0]]);
    }
    out
}

/// Largest sliding-window peak-to-peak value among windows lying in
/// `[start, end]`. Falls back to the plain range when the segment is
/// shorter than one window.
pub fn segment_envelope(times: &[f64], values: &[f64], start: f64, end: f64, window: f64) -> f64 {
    let (lo, hi) = index_range(times, start, end);
    let (t, v) = (&times[lo..hi], &values[lo..hi]);
    let env = envelope(t, v, window);
    if env.is_empty() {
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = v.iter().copied().fold(f64::INFINITY, f64::min);
        return if v.is_empty() { 0.0 } else { max - min };
    }
    env.into_iter().fold(0.0, f64::max)
}

fn index_range(times: &[f64], start: f64, end: f64) -> (usize, usize) {
    let lo = times.partition_point(|&t| t < start);
    let hi = times.partition_point(|&t| t <= end);
    (lo, hi.max(lo))
}

pub fn path_length(positions: &[Point]) -> f64 {
    positions.windows(2).map(|w| dist(w[0], w[1])).sum()
}

/// Path length up to and including the first sample inside the
/// `eps`-ball. `None` if the ball is never entered.
pub fn path_to_entry(positions: &[Point], target: Point, eps: f64) -> Option<f64> {
    let i = positions.iter().position(|p| dist(*p, target) < eps)?;
    Some(path_length(&positions[..=i]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundFit {
    /// Largest exponent on the grid for which the bound holds over the tail.
    pub p: Option<f64>,
    /// Last recorded time at which `|J| > 1/t^p`; 0 if none.
    pub t_star: Option<f64>,
    pub satisfied: bool,
}

/// Exponents searched by [`bound_fit`]: 1.01 to 4.00 in steps of 0.01.
pub fn bound_grid() -> impl Iterator<Item = f64> {
    (101..=400).map(|k| k as f64 / 100.0)
}

/// Fits `|J(t)| <= 1/t^p` over the trailing `tail_fraction` of the series.
/// Samples at `t <= 0` are ignored.
pub fn bound_fit(times: &[f64], j: &[f64], tail_fraction: f64) -> BoundFit {
    let pairs: Vec<(f64, f64)> = times
        .iter()
        .zip(j)
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, v)| (*t, v.abs()))
        .collect();
    let none = BoundFit {
        p: None,
        t_star: None,
        satisfied: false,
    };
    let (Some(first), Some(last)) = (pairs.first(), pairs.last()) else {
        return none;
    };
    let tail_start = last.0 - tail_fraction.clamp(0.0, 1.0) * (last.0 - first.0);
    let last_violation = |p: f64| -> f64 {
        pairs
            .iter()
            .rev()
            .find(|(t, v)| *v > t.powf(-p) * (1.0 + BOUND_SLACK))
            .map_or(0.0, |(t, _)| *t)
    };
    let mut best = none;
    for p in bound_grid() {
        let t_star = last_violation(p);
        if t_star < tail_start {
            best = BoundFit {
                p: Some(p),
                t_star: Some(t_star),
                satisfied: true,
            };
        }
    }
    best
}

/// Per-component root-mean-square gradient error over `[start, end]`.
pub fn gradient_rmse(record: &TrajectoryRecord, start: f64, end: f64) -> [f64; 2] {
    let rows: Vec<_> = record
        .samples
        .iter()
        .filter(|s| s.t >= start && s.t <= end)
        .collect();
    if rows.is_empty() {
        return [0.0; 2];
    }
    std::array::from_fn(|i| {
        let ss: f64 = rows
            .iter()
            .map(|s| (s.grad_est[i] - s.grad_true[i]).powi(2))
            .sum();
        (ss / rows.len() as f64).sqrt()
    })
}

/// Knobs for [`RunMetrics::compute`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsOptions {
    pub epsilon: f64,
    /// Envelope window, in dither periods.
    pub envelope_periods: f64,
    /// Fraction of the run used for the initial and final envelope segments.
    pub segment_fraction: f64,
    pub bound_tail_fraction: f64,
    /// Gradient error is taken over this trailing fraction of the run.
    pub gradient_tail_fraction: f64,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            envelope_periods: 5.0,
            segment_fraction: 0.1,
            bound_tail_fraction: 0.8,
            gradient_tail_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub epsilon: f64,
    pub convergence_time: Option<f64>,
    pub final_distance: f64,
    pub final_value: f64,
    pub path_length: f64,
    pub path_to_entry: Option<f64>,
    pub envelope_initial: [f64; 2],
    pub envelope_final: [f64; 2],
    pub attenuation_ratio: [f64; 2],
    pub gradient_rmse: Option<[f64; 2]>,
    pub bound_p_fit: Option<[Option<f64>; 2]>,
    pub bound_t_star: Option<[Option<f64>; 2]>,
    pub amplitude_final: [f64; 2],
}

impl RunMetrics {
    /// Metrics of `record`, produced by `scenario`. Distances are measured
    /// against the extremum location at the final time.
    pub fn compute(
        record: &TrajectoryRecord,
        scenario: &Scenario,
        opts: &MetricsOptions,
    ) -> Result<Self> {
        let field = build_field(&scenario.field)?;
        let times = record.times();
        let pos = record.positions();
        let (Some(first), Some(last)) = (record.samples.first(), record.last()) else {
            return Err(crate::Error::Config("empty trajectory record".into()));
        };
        let target = field.extremum_at(last.t);
        let span = last.t - first.t;
        let window = opts.envelope_periods * scenario.esc.period();
        let seg = opts.segment_fraction * span;
        let env = |i: usize, a: f64, b: f64| {
            let v: Vec<f64> = pos.iter().map(|p| p[i]).collect();
            segment_envelope(&times, &v, a, b, window)
        };
        let envelope_initial = [0, 1].map(|i| env(i, first.t, first.t + seg));
        let envelope_final = [0, 1].map(|i| env(i, last.t - seg, last.t));
        let attenuation_ratio = std::array::from_fn(|i| {
            if envelope_initial[i] > 0.0 {
                envelope_final[i] / envelope_initial[i]
            } else {
                0.0
            }
        });
        let has_filter = scenario.gekf.is_some();
        let adaptive = scenario.esc.variant == Variant::GekfAdaptive;
        let gradient_rmse = has_filter.then(|| {
            gradient_rmse(record, last.t - opts.gradient_tail_fraction * span, last.t)
        });
        let fits = adaptive.then(|| {
            [0, 1].map(|i| {
                let j: Vec<f64> = record.samples.iter().map(|s| s.j[i]).collect();
                bound_fit(&times, &j, opts.bound_tail_fraction)
            })
        });
        Ok(Self {
            epsilon: opts.epsilon,
            convergence_time: convergence_time(&times, &pos, target, opts.epsilon),
            final_distance: dist(last.position, target),
            final_value: last.f_true,
            path_length: path_length(&pos),
            path_to_entry: path_to_entry(&pos, target, opts.epsilon),
            envelope_initial,
            envelope_final,
            attenuation_ratio,
            gradient_rmse,
            bound_p_fit: fits.map(|f| f.map(|b| b.p)),
            bound_t_star: fits.map(|f| f.map(|b| b.t_star)),
            amplitude_final: last.amplitudes,
        })
    }
}
