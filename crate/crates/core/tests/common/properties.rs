//! Property suites shared by the `properties` test target and the acceptance
//! harness. Each suite runs a deterministic proptest runner.

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use roadloc::bench::cdf;
use roadloc::curve_fit::{fit_curves, locate_on_curve, GRID_STEPS};
use roadloc::features::{feature_set, FeatureKind};
use roadloc::localizer::bayes_posterior;
use roadloc::salient::{apply_mask, information_gain, masked_distance, select_salient, SelectionMask};
use roadloc::segmentation::{bottom_up_segment, segment_cost, SingularPointSet};
use roadloc::signal::{arc_lengths, parse_dataset, serialize_dataset};
use roadloc::{Position2D, Scenario, SignalSequence, SignalVector};

pub type Suite = (&'static str, fn() -> Result<(), String>);

pub const SUITES: &[Suite] = &[
    ("dataset round-trip", dataset_round_trip),
    ("arc length under rigid motion", arc_length_rigid_motion),
    ("feature length is 5K", feature_length),
    ("feature shift of a small cell", feature_shift_small_cell),
    ("feature shift of the macro cell", feature_shift_macro_cell),
    ("feature reversal", feature_reversal),
    ("segmentation respects l_min", segmentation_min_len),
    ("aligned boundaries cost zero", aligned_cost_zero),
    ("information gain bounds", gain_bounds),
    ("selection size and determinism", selection_size),
    ("mask idempotence and unselected scaling", mask_properties),
    ("posterior normalization and monotonicity", posterior_monotone),
    ("uniform-prior argmax", uniform_prior_argmax),
    ("curve inversion local optimality", curve_local_optimality),
    ("cdf construction", cdf_construction),
];

fn run<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    let mut runner = TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    );
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn sequence(rsrp: &[Vec<f64>], gaps: &[f64]) -> SignalSequence {
    let mut x = 0.0;
    let positions = rsrp
        .iter()
        .enumerate()
        .map(|(j, _)| {
            if j > 0 {
                x += gaps[j - 1];
            }
            Position2D::new(x, 0.3 * x)
        })
        .collect();
    let signals = rsrp.iter().map(|r| SignalVector::new(r.clone()).unwrap()).collect();
    SignalSequence::new("r", positions, signals).unwrap()
}

fn readings() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    (1usize..4, 2usize..25).prop_flat_map(|(k, n)| {
        (
            prop::collection::vec(prop::collection::vec(-130.0f64..-40.0, k), n),
            prop::collection::vec(0.2f64..3.0, n),
        )
    })
}

fn dataset_round_trip() -> Result<(), String> {
    let road = (1usize..4, 2usize..12).prop_flat_map(|(k, n)| {
        (
            prop::collection::vec(prop::collection::vec(-139_000i32..-1_000, k), n),
            prop::collection::vec(1i32..5_000, n),
        )
    });
    run(48, prop::collection::vec(road, 1..4), |roads| {
        let k = roads[0].0[0].len();
        let roads: Vec<SignalSequence> = roads
            .iter()
            .enumerate()
            .filter(|(_, (rsrp, _))| rsrp[0].len() == k)
            .map(|(i, (rsrp, steps))| {
                let mut x = 0i64;
                let positions = steps
                    .iter()
                    .map(|&s| {
                        x += s as i64;
                        Position2D::new(x as f64 / 1000.0, i as f64 * 7.5)
                    })
                    .collect();
                let signals = rsrp
                    .iter()
                    .map(|r| SignalVector::new(r.iter().map(|&v| v as f64 / 1000.0).collect()).unwrap())
                    .collect();
                SignalSequence::new(format!("road{i}"), positions, signals).unwrap()
            })
            .collect();
        let scenario = Scenario::new(Vec::new(), roads, None).unwrap();
        let back = parse_dataset(&serialize_dataset(&scenario)).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(back.roads(), scenario.roads());
        Ok(())
    })
}

fn arc_length_rigid_motion() -> Result<(), String> {
    let strategy = (
        prop::collection::vec((-500.0f64..500.0, -500.0f64..500.0), 2..30),
        0.0f64..std::f64::consts::TAU,
        (-1e3f64..1e3, -1e3f64..1e3),
    );
    run(128, strategy, |(pts, theta, (dx, dy))| {
        let mut pts = pts;
        pts.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-6 && (a.1 - b.1).abs() < 1e-6);
        prop_assume!(pts.len() >= 2);
        let make = |f: &dyn Fn(f64, f64) -> (f64, f64)| {
            let positions = pts
                .iter()
                .map(|&(x, y)| {
                    let (u, v) = f(x, y);
                    Position2D::new(u, v)
                })
                .collect();
            let signals = vec![SignalVector::new(vec![-80.0]).unwrap(); pts.len()];
            SignalSequence::new("r", positions, signals)
        };
        let Ok(original) = make(&|x, y| (x, y)) else {
            return Err(TestCaseError::reject("coincident"));
        };
        let (s, c) = theta.sin_cos();
        let moved = make(&|x, y| (c * x - s * y + dx, s * x + c * y + dy)).unwrap();
        for (a, b) in arc_lengths(&original).iter().zip(arc_lengths(&moved)) {
            prop_assert!((a - b).abs() <= 1e-9, "{} vs {}", a, b);
        }
        Ok(())
    })
}

fn feature_length() -> Result<(), String> {
    run(128, readings(), |(rsrp, gaps)| {
        let f = feature_set(&sequence(&rsrp, &gaps));
        prop_assert_eq!(f.dim(), 5 * rsrp[0].len());
        Ok(())
    })
}

fn shifted(rsrp: &[Vec<f64>], bs: usize, c: f64) -> Vec<Vec<f64>> {
    rsrp.iter()
        .map(|r| {
            let mut r = r.clone();
            r[bs] += c;
            r
        })
        .collect()
}

fn feature_shift_small_cell() -> Result<(), String> {
    let strategy = readings()
        .prop_filter("needs a small cell", |(r, _)| r[0].len() >= 2)
        .prop_flat_map(|(r, g)| {
            let k = r[0].len();
            (Just(r), Just(g), 1..k, -10.0f64..10.0)
        });
    run(128, strategy, |(rsrp, gaps, bs, c)| {
        let k = rsrp[0].len();
        let a = feature_set(&sequence(&rsrp, &gaps));
        let b = feature_set(&sequence(&shifted(&rsrp, bs, c), &gaps));
        for j in 0..k {
            let shift = if j == bs { c } else { 0.0 };
            prop_assert!(close(b.get(FeatureKind::Mean, j), a.get(FeatureKind::Mean, j) + shift, 1e-9));
            prop_assert!(close(
                b.get(FeatureKind::MeanDifference, j),
                a.get(FeatureKind::MeanDifference, j) + shift,
                1e-9
            ));
            for kind in [FeatureKind::MeanGradient, FeatureKind::Variance, FeatureKind::Range] {
                prop_assert!(close(b.get(kind, j), a.get(kind, j), 1e-9), "{:?}[{}]", kind, j);
            }
        }
        Ok(())
    })
}

fn feature_shift_macro_cell() -> Result<(), String> {
    let strategy = (readings(), -10.0f64..10.0);
    run(128, strategy, |((rsrp, gaps), c)| {
        let k = rsrp[0].len();
        let a = feature_set(&sequence(&rsrp, &gaps));
        let b = feature_set(&sequence(&shifted(&rsrp, 0, c), &gaps));
        prop_assert!(close(b.get(FeatureKind::Mean, 0), a.get(FeatureKind::Mean, 0) + c, 1e-9));
        prop_assert!(b.get(FeatureKind::MeanDifference, 0).abs() < 1e-12);
        for j in 1..k {
            prop_assert!(close(
                b.get(FeatureKind::MeanDifference, j),
                a.get(FeatureKind::MeanDifference, j) - c,
                1e-9
            ));
            prop_assert!(close(b.get(FeatureKind::Mean, j), a.get(FeatureKind::Mean, j), 1e-12));
        }
        for kind in [FeatureKind::MeanGradient, FeatureKind::Variance, FeatureKind::Range] {
            for j in 0..k {
                prop_assert!(close(b.get(kind, j), a.get(kind, j), 1e-9));
            }
        }
        Ok(())
    })
}

fn feature_reversal() -> Result<(), String> {
    run(128, readings(), |(rsrp, gaps)| {
        let k = rsrp[0].len();
        let a = feature_set(&sequence(&rsrp, &gaps));
        let rev_rsrp: Vec<_> = rsrp.iter().rev().cloned().collect();
        let rev_gaps: Vec<_> = gaps[..rsrp.len() - 1].iter().rev().copied().collect();
        let b = feature_set(&sequence(&rev_rsrp, &rev_gaps));
        for j in 0..k {
            prop_assert!(close(
                b.get(FeatureKind::MeanGradient, j),
                -a.get(FeatureKind::MeanGradient, j),
                1e-9
            ));
            for kind in [FeatureKind::Mean, FeatureKind::Variance, FeatureKind::MeanDifference, FeatureKind::Range] {
                prop_assert!(close(b.get(kind, j), a.get(kind, j), 1e-9));
            }
        }
        Ok(())
    })
}

fn gradient_rows() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..4, 4usize..40)
        .prop_flat_map(|(k, n)| prop::collection::vec(prop::collection::vec(-3.0f64..3.0, k), n))
}

fn segmentation_min_len() -> Result<(), String> {
    run(96, (gradient_rows(), 1usize..6, 0.0f64..2.0), |(rows, min_len, pen)| {
        prop_assume!(rows.len() >= 2 * min_len);
        let g = roadloc::features::GradientMatrix::from_rows(&rows).unwrap();
        let points = bottom_up_segment(&g, min_len, pen).map_err(|e| TestCaseError::fail(e.to_string()))?;
        for (s, e) in points.ranges(rows.len()) {
            prop_assert!(e - s >= min_len, "segment {}..{} under {}", s, e, min_len);
        }
        Ok(())
    })
}

fn aligned_cost_zero() -> Result<(), String> {
    let strategy = (
        prop::collection::vec((1usize..6, prop::collection::vec(-3.0f64..3.0, 2)), 1..6),
        prop::collection::vec(1usize..40, 0..4),
    );
    run(96, strategy, |(pieces, extra)| {
        let mut rows = Vec::new();
        let mut aligned = Vec::new();
        for (len, level) in &pieces {
            if !rows.is_empty() {
                aligned.push(rows.len());
            }
            rows.extend(std::iter::repeat_n(level.clone(), *len));
        }
        let g = roadloc::features::GradientMatrix::from_rows(&rows).unwrap();
        let zero = segment_cost(&g, &SingularPointSet::new(aligned)).unwrap();
        prop_assert!(zero.abs() < 1e-12);
        let mut other: Vec<usize> = extra.iter().map(|b| 1 + b % (rows.len().max(2) - 1)).filter(|&b| b < rows.len()).collect();
        other.sort_unstable();
        other.dedup();
        let cost = segment_cost(&g, &SingularPointSet::new(other)).unwrap();
        prop_assert!(cost >= zero - 1e-12);
        Ok(())
    })
}

fn labelled(dim_max: usize) -> impl Strategy<Value = (Vec<usize>, Vec<Vec<f64>>)> {
    (1usize..=dim_max, 4usize..40).prop_flat_map(|(dim, n)| {
        (
            prop::collection::vec(0usize..3, n),
            prop::collection::vec(prop::collection::vec(-10.0f64..10.0, dim), n),
        )
    })
}

fn label_entropy(labels: &[usize]) -> f64 {
    let mut counts = [0usize; 3];
    for &l in labels {
        counts[l] += 1;
    }
    let n = labels.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| -(c as f64 / n) * (c as f64 / n).log2())
        .sum()
}

fn gain_bounds() -> Result<(), String> {
    run(128, (labelled(1), 0.1f64..5.0), |((labels, samples), width)| {
        prop_assume!(labels.iter().any(|&l| l != labels[0]));
        let values: Vec<f64> = samples.iter().map(|r| r[0]).collect();
        let g = information_gain(&labels, &values, width).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let h = label_entropy(&labels);
        prop_assert!(g >= -1e-12 && g <= h + 1e-12, "gain {} outside [0, {}]", g, h);
        let constant = vec![1.0; labels.len()];
        prop_assert!(information_gain(&labels, &constant, width).unwrap().abs() < 1e-12);
        Ok(())
    })
}

fn selection_size() -> Result<(), String> {
    run(64, (labelled(6), 1usize..5), |((labels, samples), f_max)| {
        prop_assume!(labels.iter().any(|&l| l != labels[0]));
        let widths = vec![2.0; samples[0].len()];
        let a = select_salient(&labels, &samples, &widths, f_max).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let b = select_salient(&labels, &samples, &widths, f_max).unwrap();
        prop_assert!(a.mask.len() <= f_max && !a.mask.is_empty());
        prop_assert_eq!(a, b);
        Ok(())
    })
}

fn mask_properties() -> Result<(), String> {
    let strategy = (2usize..16).prop_flat_map(|dim| {
        (
            prop::collection::vec(-50.0f64..50.0, dim),
            prop::collection::vec(-50.0f64..50.0, dim),
            prop::collection::vec(any::<bool>(), dim),
            -5.0f64..5.0,
        )
    });
    run(128, strategy, |(e, r, pick, factor)| {
        let dim = e.len();
        let selected: Vec<usize> = (0..dim).filter(|&i| pick[i]).collect();
        prop_assume!(!selected.is_empty());
        let mask = SelectionMask::new(dim, selected).unwrap();
        let once = apply_mask(&mask, &e).unwrap();
        prop_assert_eq!(apply_mask(&mask, &once).unwrap(), once.clone());
        let scaled: Vec<f64> = e
            .iter()
            .enumerate()
            .map(|(i, v)| if mask.contains(i) { *v } else { v * factor })
            .collect();
        prop_assert_eq!(apply_mask(&mask, &scaled).unwrap(), once);
        prop_assert_eq!(masked_distance(&mask, &scaled, &r), masked_distance(&mask, &e, &r));
        Ok(())
    })
}

fn candidates() -> impl Strategy<Value = (f64, Vec<f64>, Vec<f64>)> {
    (1usize..10).prop_flat_map(|n| {
        (
            1e-6f64..1.0,
            prop::collection::vec(0.01f64..1.0, n),
            prop::collection::vec(0.0f64..20.0, n),
        )
    })
}

fn posterior_monotone() -> Result<(), String> {
    let strategy = candidates().prop_flat_map(|(p, priors, d)| {
        let n = d.len();
        (Just(p), Just(priors), Just(d), 0..n, 0.0f64..1.0)
    });
    run(256, strategy, |(p, priors, d, l, frac)| {
        let before = bayes_posterior(p, &priors, &d).unwrap();
        prop_assert!((before.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        let mut closer = d.clone();
        closer[l] *= frac;
        let after = bayes_posterior(p, &priors, &closer).unwrap();
        prop_assert!(after[l] >= before[l] - 1e-15, "{} < {}", after[l], before[l]);
        Ok(())
    })
}

fn uniform_prior_argmax() -> Result<(), String> {
    run(256, candidates(), |(p, _, d)| {
        let n = d.len();
        let post = bayes_posterior(p, &vec![1.0 / n as f64; n], &d).unwrap();
        let best_post = (0..n).max_by(|&a, &b| post[a].total_cmp(&post[b]).then(b.cmp(&a))).unwrap();
        let best_dist = (0..n).min_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b))).unwrap();
        prop_assert_eq!(d[best_post], d[best_dist]);
        Ok(())
    })
}

fn curve_local_optimality() -> Result<(), String> {
    let strategy = (1usize..4, 8usize..40, 0usize..4).prop_flat_map(|(k, n, degree)| {
        (
            prop::collection::vec(prop::collection::vec(-110.0f64..-50.0, k), n),
            Just(degree),
            prop::collection::vec(-110.0f64..-50.0, k),
        )
    });
    run(64, strategy, |(rsrp, degree, query)| {
        let gaps = vec![1.0; rsrp.len()];
        let curves = fit_curves(&sequence(&rsrp, &gaps), degree).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let loc = locate_on_curve(&curves, &SignalVector::new(query.clone()).unwrap());
        let best = curves.cost(&query, loc.t);
        for i in 0..=GRID_STEPS {
            let t = i as f64 / GRID_STEPS as f64;
            prop_assert!(best <= curves.cost(&query, t) + 1e-9, "grid t={} beats t*={}", t, loc.t);
        }
        Ok(())
    })
}

fn cdf_construction() -> Result<(), String> {
    run(256, prop::collection::vec(0u8..20, 1..60), |raw| {
        let errors: Vec<f64> = raw.iter().map(|&v| v as f64 * 0.5).collect();
        let c = cdf(&errors).unwrap();
        let mut distinct = errors.clone();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        prop_assert_eq!(c.len(), distinct.len());
        prop_assert!(c.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 < w[1].1));
        prop_assert!((c.last().unwrap().1 - 1.0).abs() < 1e-12);
        for (e, f) in &c {
            let at_most = errors.iter().filter(|&&x| x <= *e).count() as f64 / errors.len() as f64;
            prop_assert!((f - at_most).abs() < 1e-12);
        }
        Ok(())
    })
}
