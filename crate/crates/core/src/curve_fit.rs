//! Per-base-station RSRP polynomials over normalized arc length, and their
//! joint inversion back to a position.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{arc_lengths, Position2D, SignalSequence, SignalVector};

/// Grid resolution of the inversion search.
pub const GRID_STEPS: usize = 1000;
const REFINE_PASSES: usize = 3;
const ITERATIONS_PER_PASS: usize = 20;

/// Fitted curves of one sub-segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubSegmentCurves {
    pub degree: usize,
    /// Ascending-power coefficients per base station.
    pub coefficients: Vec<Vec<f64>>,
    pub residual_rms: Vec<f64>,
    /// Arc length of each sample from the start of the sub-segment (m).
    pub knot_arc: Vec<f64>,
    pub knots: Vec<Position2D>,
}

impl SubSegmentCurves {
    pub fn bs_count(&self) -> usize {
        self.coefficients.len()
    }

    pub fn length(&self) -> f64 {
        *self.knot_arc.last().expect("at least two knots")
    }

    pub fn eval(&self, bs: usize, t: f64) -> f64 {
        horner(&self.coefficients[bs], t)
    }

    /// Sum of squared residuals against `o` at `t`.
    pub fn cost(&self, o: &[f64], t: f64) -> f64 {
        self.coefficients
            .iter()
            .zip(o)
            .map(|(c, v)| (horner(c, t) - v).powi(2))
            .sum()
    }

    /// Position at normalized arc length `t`, interpolating the knot table.
    pub fn position_at(&self, t: f64) -> Position2D {
        let s = t.clamp(0.0, 1.0) * self.length();
        let i = self.knot_arc.partition_point(|&a| a <= s);
        if i == 0 {
            return self.knots[0];
        }
        if i >= self.knots.len() {
            return *self.knots.last().expect("at least two knots");
        }
        let (a0, a1) = (self.knot_arc[i - 1], self.knot_arc[i]);
        self.knots[i - 1].lerp(&self.knots[i], (s - a0) / (a1 - a0))
    }
}

fn horner(coefficients: &[f64], t: f64) -> f64 {
    coefficients.iter().rev().fold(0.0, |acc, c| acc * t + c)
}

/// Least-squares polynomial per base station of RSRP against normalized arc
/// length.
pub fn fit_curves(seq: &SignalSequence, degree: usize) -> Result<SubSegmentCurves> {
    let n = seq.len();
    if n < degree + 1 {
        return Err(Error::TooShort(format!(
            "{n} samples cannot determine a degree-{degree} fit"
        )));
    }
    let arc = arc_lengths(seq);
    let length = *arc.last().expect("at least two samples");
    let ts: Vec<f64> = arc.iter().map(|a| a / length).collect();
    let coefficients = fit_columns(&ts, seq.signals(), degree)?;
    let residual_rms = coefficients
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let sse: f64 = ts
                .iter()
                .zip(seq.signals())
                .map(|(&t, s)| (horner(c, t) - s[k]).powi(2))
                .sum();
            (sse / n as f64).sqrt()
        })
        .collect();
    Ok(SubSegmentCurves {
        degree,
        coefficients,
        residual_rms,
        knot_arc: arc,
        knots: seq.positions().to_vec(),
    })
}

/// Fits every column of `signals` against `ts`.
pub(crate) fn fit_columns(ts: &[f64], signals: &[SignalVector], degree: usize) -> Result<Vec<Vec<f64>>> {
    let n = ts.len();
    let cols = degree + 1;
    let design = DMatrix::from_fn(n, cols, |i, j| ts[i].powi(j as i32));
    let svd = design.svd(true, true);
    let max_sv = svd.singular_values.max();
    let tol = max_sv * 1e-12 * n.max(cols) as f64;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank < cols {
        return Err(Error::RankDeficient(format!(
            "design matrix has rank {rank}, degree {degree} needs {cols}"
        )));
    }
    let k = signals[0].len();
    (0..k)
        .map(|bs| {
            let b = DVector::from_iterator(n, signals.iter().map(|s| s[bs]));
            let x = svd
                .solve(&b, tol)
                .map_err(|e| Error::RankDeficient(e.to_string()))?;
            Ok(x.iter().copied().collect())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveLocation {
    pub t: f64,
    pub position: Position2D,
    /// RMS over base stations of the residual at `t` (dB).
    pub residual: f64,
    /// Number of single-BS polynomial evaluations spent.
    pub evaluations: usize,
}

/// Normalized arc length whose predicted readings best match `o`.
///
/// Scans a grid of step 1/1000, then refines around the best grid point with
/// ternary search. The smallest grid `t` wins exact ties.
pub fn locate_on_curve(curves: &SubSegmentCurves, o: &SignalVector) -> CurveLocation {
    let obs = o.as_slice();
    let k = curves.bs_count();
    let mut evaluations = 0;
    let mut cost = |t: f64| {
        evaluations += k;
        curves.cost(obs, t)
    };

    let step = 1.0 / GRID_STEPS as f64;
    let mut best_i = 0;
    let mut best_cost = f64::INFINITY;
    for i in 0..=GRID_STEPS {
        let c = cost(i as f64 * step);
        if c < best_cost {
            best_cost = c;
            best_i = i;
        }
    }
    let mut best_t = best_i as f64 * step;

    let mut lo = best_i.saturating_sub(1) as f64 * step;
    let mut hi = (best_i + 1).min(GRID_STEPS) as f64 * step;
    for _ in 0..REFINE_PASSES {
        for _ in 0..ITERATIONS_PER_PASS {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if cost(m1) <= cost(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
    }
    let refined = 0.5 * (lo + hi);
    let refined_cost = cost(refined);
    if refined_cost < best_cost {
        best_t = refined;
        best_cost = refined_cost;
    }

    CurveLocation {
        t: best_t,
        position: curves.position_at(best_t),
        residual: (best_cost / k as f64).sqrt(),
        evaluations,
    }
}
