//! Gradient, difference and statistical signal features.
//!
//! A [`FeatureSet`] holds `Q * K` aggregates in a fixed layout: mean gradient,
//! mean RSRP, RSRP variance, mean difference to the macro cell and RSRP range,
//! each block ordered by base station.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{Position2D, SignalSequence, SignalVector};

/// Number of feature kinds.
pub const Q: usize = 5;

/// Version tag of the [`FeatureSet`] layout. Stored in radio maps.
pub const FEATURE_LAYOUT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    MeanGradient,
    Mean,
    Variance,
    MeanDifference,
    Range,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; Q] = [
        FeatureKind::MeanGradient,
        FeatureKind::Mean,
        FeatureKind::Variance,
        FeatureKind::MeanDifference,
        FeatureKind::Range,
    ];

    pub fn block(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::MeanGradient => "grad",
            FeatureKind::Mean => "mean",
            FeatureKind::Variance => "var",
            FeatureKind::MeanDifference => "diff",
            FeatureKind::Range => "range",
        }
    }

    /// Kind and base station of a layout index.
    pub fn of_index(index: usize, bs_count: usize) -> (FeatureKind, usize) {
        (Self::ALL[index / bs_count], index % bs_count)
    }

    pub fn index(self, bs: usize, bs_count: usize) -> usize {
        self.block() * bs_count + bs
    }
}

/// Human-readable label of a layout index, e.g. `mean[2]`.
pub fn feature_label(index: usize, bs_count: usize) -> String {
    let (kind, bs) = FeatureKind::of_index(index, bs_count);
    format!("{}[{bs}]", kind.name())
}

/// Per-step signal gradients in dB/m, `(L - 1) x K`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl GradientMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map(Vec::len).unwrap_or(0);
        if cols == 0 {
            return Err(Error::InvalidInput("gradient matrix needs at least one column".into()));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch {
                expected: cols,
                actual: r.len(),
            });
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("gradient entries must be finite".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    /// Single-column matrix.
    pub fn from_column(values: &[f64]) -> Result<Self> {
        Self::from_rows(&values.iter().map(|&v| vec![v]).collect::<Vec<_>>())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn column(&self, col: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.rows).map(move |j| self.get(j, col))
    }
}

/// Gradient of every base station between consecutive samples.
pub fn gradients(seq: &SignalSequence) -> Result<GradientMatrix> {
    gradients_from(seq.positions(), seq.signals())
}

pub fn gradients_from(positions: &[Position2D], signals: &[SignalVector]) -> Result<GradientMatrix> {
    if positions.len() != signals.len() || positions.len() < 2 {
        return Err(Error::TooShort(format!(
            "gradients need matching positions and signals with at least 2 samples, got {} and {}",
            positions.len(),
            signals.len()
        )));
    }
    let cols = signals[0].len();
    let mut data = Vec::with_capacity((positions.len() - 1) * cols);
    for j in 0..positions.len() - 1 {
        let dist = positions[j].distance(&positions[j + 1]);
        if dist <= 0.0 {
            return Err(Error::CoincidentPositions {
                road_id: String::new(),
                index: j,
            });
        }
        for k in 0..cols {
            data.push((signals[j + 1][k] - signals[j][k]) / dist);
        }
    }
    Ok(GradientMatrix {
        rows: positions.len() - 1,
        cols,
        data,
    })
}

/// RSRP of every base station relative to the macro cell (index 0).
pub fn differences(o: &SignalVector) -> Vec<f64> {
    let reference = o[0];
    o.as_slice().iter().map(|p| p - reference).collect()
}

/// Aggregate feature vector of a signal sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    bs_count: usize,
    values: Vec<f64>,
}

impl FeatureSet {
    pub fn from_values(bs_count: usize, values: Vec<f64>) -> Result<Self> {
        if bs_count == 0 || values.len() != Q * bs_count {
            return Err(Error::DimensionMismatch {
                expected: Q * bs_count,
                actual: values.len(),
            });
        }
        Ok(Self { bs_count, values })
    }

    pub fn bs_count(&self) -> usize {
        self.bs_count
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, kind: FeatureKind, bs: usize) -> f64 {
        self.values[kind.index(bs, self.bs_count)]
    }
}

/// Feature set of a whole sequence.
pub fn feature_set(seq: &SignalSequence) -> FeatureSet {
    let grads = gradients(seq).expect("a valid sequence has distinct consecutive positions");
    aggregate(seq.signals(), &grads, 0, seq.len() - 1)
}

/// Features over samples `start..=end` given precomputed gradients of the
/// enclosing sequence.
fn aggregate(signals: &[SignalVector], grads: &GradientMatrix, start: usize, end: usize) -> FeatureSet {
    debug_assert!(end > start);
    let k = grads.cols();
    let n = (end - start + 1) as f64;
    let steps = (end - start) as f64;
    let mut values = vec![0.0; Q * k];
    for bs in 0..k {
        let grad_mean = (start..end).map(|j| grads.get(j, bs)).sum::<f64>() / steps;

        let column = signals[start..=end].iter().map(|s| s[bs]);
        let mean = column.clone().sum::<f64>() / n;
        let var = column.clone().map(|p| (p - mean).powi(2)).sum::<f64>() / n;
        let (lo, hi) = column
            .clone()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p), hi.max(p)));
        let diff_mean = signals[start..=end]
            .iter()
            .map(|s| s[bs] - s[0])
            .sum::<f64>()
            / n;

        values[FeatureKind::MeanGradient.index(bs, k)] = grad_mean;
        values[FeatureKind::Mean.index(bs, k)] = mean;
        values[FeatureKind::Variance.index(bs, k)] = var;
        values[FeatureKind::MeanDifference.index(bs, k)] = diff_mean;
        values[FeatureKind::Range.index(bs, k)] = hi - lo;
    }
    FeatureSet {
        bs_count: k,
        values,
    }
}

/// Per-sample feature values: for each sample, the feature set of a window of
/// `window` samples centred on it (shifted inward at the ends).
pub fn windowed_features(seq: &SignalSequence, window: usize) -> Vec<FeatureSet> {
    let grads = gradients(seq).expect("a valid sequence has distinct consecutive positions");
    let len = seq.len();
    let w = window.clamp(2, len);
    (0..len)
        .map(|j| {
            let start = j.saturating_sub(w / 2).min(len - w);
            aggregate(seq.signals(), &grads, start, start + w - 1)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(positions: &[(f64, f64)], rsrp: &[Vec<f64>]) -> SignalSequence {
        SignalSequence::new(
            "r",
            positions.iter().map(|&(x, y)| Position2D::new(x, y)).collect(),
            rsrp.iter().map(|v| SignalVector::new(v.clone()).unwrap()).collect(),
        )
        .unwrap()
    }

    fn unit_spaced(rsrp: &[Vec<f64>]) -> SignalSequence {
        let pos: Vec<_> = (0..rsrp.len()).map(|j| (j as f64, 0.0)).collect();
        seq(&pos, rsrp)
    }

    #[test]
    fn gradient_examples() {
        let g = gradients(&seq(&[(0.0, 0.0), (2.0, 0.0)], &[vec![-80.0], vec![-82.0]])).unwrap();
        assert_eq!((g.rows(), g.get(0, 0)), (1, -1.0));

        let g = gradients(&seq(&[(0.0, 0.0), (0.5, 0.0), (3.0, 1.0)], &vec![vec![-75.0]; 3])).unwrap();
        assert!(g.column(0).all(|v| v == 0.0));

        let g = gradients(&seq(&[(0.0, 0.0), (0.0, 1.0)], &[vec![-70.0], vec![-67.0]])).unwrap();
        assert_eq!(g.get(0, 0), 3.0);
    }

    #[test]
    fn gradients_reject_coincident_positions() {
        let p = [Position2D::new(0.0, 0.0), Position2D::new(1.0, 0.0), Position2D::new(1.0, 0.0)];
        let s = vec![SignalVector::new(vec![-70.0]).unwrap(); 3];
        match gradients_from(&p, &s) {
            Err(Error::CoincidentPositions { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn difference_examples() {
        let d = |v: Vec<f64>| differences(&SignalVector::new(v).unwrap());
        assert_eq!(d(vec![-70.0, -85.0, -90.0]), vec![0.0, -15.0, -20.0]);
        assert_eq!(d(vec![-66.0; 4]), vec![0.0; 4]);
        assert_eq!(d(vec![-90.0]), vec![0.0]);
    }

    #[test]
    fn feature_set_examples() {
        let e = feature_set(&unit_spaced(&vec![vec![-80.0]; 3]));
        assert_eq!(e.as_slice(), &[0.0, -80.0, 0.0, 0.0, 0.0]);

        let e = feature_set(&unit_spaced(&[vec![-80.0], vec![-81.0], vec![-82.0]]));
        let expected = [-1.0, -81.0, 2.0 / 3.0, 0.0, 2.0];
        for (a, b) in e.as_slice().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn windowed_features_cover_every_sample() {
        let rsrp: Vec<Vec<f64>> = (0..25).map(|j| vec![-70.0 - j as f64, -90.0]).collect();
        let w = windowed_features(&unit_spaced(&rsrp), 10);
        assert_eq!(w.len(), 25);
        // Linear ramp: every window has gradient -1 and range 9.
        for f in &w {
            assert!((f.get(FeatureKind::MeanGradient, 0) + 1.0).abs() < 1e-12);
            assert_eq!(f.get(FeatureKind::Range, 0), 9.0);
        }
        assert_eq!(w[0].get(FeatureKind::Mean, 0), -74.5);
        assert_eq!(w[24].get(FeatureKind::Mean, 0), -89.5);
    }

    #[test]
    fn layout_labels() {
        assert_eq!(feature_label(0, 3), "grad[0]");
        assert_eq!(feature_label(4, 3), "mean[1]");
        assert_eq!(feature_label(14, 3), "range[2]");
        assert_eq!(FeatureKind::Variance.index(2, 6), 14);
    }

    fn rsrp_matrix() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (1usize..4, 2usize..30).prop_flat_map(|(k, n)| {
            prop::collection::vec(prop::collection::vec(-130.0f64..-40.0, k), n)
        })
    }

    fn spacing(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.2f64..3.0, n)
    }

    fn build(rsrp: &[Vec<f64>], gaps: &[f64]) -> SignalSequence {
        let mut x = 0.0;
        let pos: Vec<_> = gaps
            .iter()
            .take(rsrp.len())
            .map(|g| {
                let p = (x, 0.5 * x);
                x += g;
                p
            })
            .collect();
        seq(&pos, rsrp)
    }

    proptest! {
        #[test]
        fn output_length_is_q_times_k(rsrp in rsrp_matrix(), gaps in spacing(30)) {
            let e = feature_set(&build(&rsrp, &gaps));
            prop_assert_eq!(e.dim(), Q * rsrp[0].len());
            for bs in 0..rsrp[0].len() {
                prop_assert!(e.get(FeatureKind::Variance, bs) >= 0.0);
                prop_assert!(e.get(FeatureKind::Range, bs) >= 0.0);
            }
            prop_assert_eq!(e.get(FeatureKind::MeanDifference, 0), 0.0);
        }

        #[test]
        fn constant_shift_of_one_bs(
            rsrp in rsrp_matrix(), gaps in spacing(30), c in -5.0f64..5.0, pick in 0usize..3,
        ) {
            let k = rsrp[0].len();
            let bs = pick % k;
            let shifted: Vec<Vec<f64>> = rsrp
                .iter()
                .map(|row| row.iter().enumerate().map(|(i, &v)| if i == bs { v + c } else { v }).collect())
                .collect();
            // Keep the shifted readings inside the valid range.
            prop_assume!(shifted.iter().flatten().all(|&v| v < 0.0 && v >= -140.0));
            let a = feature_set(&build(&rsrp, &gaps));
            let b = feature_set(&build(&shifted, &gaps));
            let tol = 1e-9;
            for j in 0..k {
                let d = |kind| b.get(kind, j) - a.get(kind, j);
                let want_mean = if j == bs { c } else { 0.0 };
                prop_assert!((d(FeatureKind::Mean) - want_mean).abs() < tol);
                prop_assert!(d(FeatureKind::MeanGradient).abs() < tol);
                prop_assert!(d(FeatureKind::Variance).abs() < 1e-7);
                prop_assert!(d(FeatureKind::Range).abs() < tol);
                let want_diff = match (bs, j) {
                    (0, 0) => 0.0,
                    (0, _) => -c,
                    (b, j) if b == j => c,
                    _ => 0.0,
                };
                prop_assert!((d(FeatureKind::MeanDifference) - want_diff).abs() < tol);
            }
        }

        #[test]
        fn reversal_negates_gradients(rsrp in rsrp_matrix(), gaps in spacing(30)) {
            let fwd = build(&rsrp, &gaps);
            let rev = SignalSequence::new(
                "r",
                fwd.positions().iter().rev().copied().collect(),
                fwd.signals().iter().rev().cloned().collect(),
            ).unwrap();
            let a = feature_set(&fwd);
            let b = feature_set(&rev);
            for bs in 0..a.bs_count() {
                prop_assert!((a.get(FeatureKind::MeanGradient, bs) + b.get(FeatureKind::MeanGradient, bs)).abs() < 1e-9);
                for kind in [FeatureKind::Mean, FeatureKind::Variance, FeatureKind::MeanDifference, FeatureKind::Range] {
                    prop_assert!((a.get(kind, bs) - b.get(kind, bs)).abs() < 1e-7);
                }
            }
        }
    }
}
