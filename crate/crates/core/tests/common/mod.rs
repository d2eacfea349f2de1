#![allow(dead_code)]

pub mod properties;

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roadloc::features::GradientMatrix;
use roadloc::{Position2D, Scenario, SignalSequence, SignalVector};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Sum over segments and columns of squared deviation from the segment mean,
/// divided by segment length. Rows `b..` start a new segment for every `b`
/// in `bounds`.
pub fn scripted_cost(rows: &[Vec<f64>], bounds: &[usize]) -> f64 {
    let mut edges = vec![0];
    edges.extend_from_slice(bounds);
    edges.push(rows.len());
    let mut total = 0.0;
    for w in edges.windows(2) {
        let seg = &rows[w[0]..w[1]];
        let n = seg.len() as f64;
        for k in 0..rows[0].len() {
            let mean = seg.iter().map(|r| r[k]).sum::<f64>() / n;
            total += seg.iter().map(|r| (r[k] - mean) * (r[k] - mean)).sum::<f64>() / n;
        }
    }
    total
}

fn entropy_bits(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.log2()
        })
        .sum()
}

/// `H(Y) - H(Y | joint floor bins of subset)` from explicit contingency
/// tables.
pub fn scripted_gain(labels: &[usize], samples: &[Vec<f64>], subset: &[usize], widths: &[f64]) -> f64 {
    let mut by_label: HashMap<usize, usize> = HashMap::new();
    for &l in labels {
        *by_label.entry(l).or_default() += 1;
    }
    let h_y = entropy_bits(&by_label.values().copied().collect::<Vec<_>>());
    let mut cells: HashMap<Vec<i64>, HashMap<usize, usize>> = HashMap::new();
    for (row, &l) in samples.iter().zip(labels) {
        let key: Vec<i64> = subset.iter().map(|&f| (row[f] / widths[f]).floor() as i64).collect();
        *cells.entry(key).or_default().entry(l).or_default() += 1;
    }
    let n = labels.len() as f64;
    let h_cond: f64 = cells
        .values()
        .map(|cell| {
            let counts: Vec<usize> = cell.values().copied().collect();
            counts.iter().sum::<usize>() as f64 / n * entropy_bits(&counts)
        })
        .sum();
    h_y - h_cond
}

/// Largest scripted gain over every nonempty subset of at most `f_max`
/// features.
pub fn brute_force_best_gain(labels: &[usize], samples: &[Vec<f64>], widths: &[f64], f_max: usize) -> f64 {
    let dim = widths.len();
    (1u32..1 << dim)
        .filter(|m| m.count_ones() as usize <= f_max)
        .map(|m| {
            let subset: Vec<usize> = (0..dim).filter(|&f| m & (1 << f) != 0).collect();
            scripted_gain(labels, samples, &subset, widths)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Bayes' rule over candidates, evaluated directly in the linear domain.
pub fn scripted_posterior(road_probability: f64, priors: &[f64], distances: &[f64]) -> Vec<f64> {
    let joint: Vec<f64> = priors
        .iter()
        .zip(distances)
        .map(|(p, d)| road_probability * (-d).exp() * p)
        .collect();
    let total: f64 = joint.iter().sum();
    joint.iter().map(|j| j / total).collect()
}

/// Piecewise-constant gradient rows with planted boundaries, every piece at
/// least `min_len` rows and adjacent pieces differing in some column.
pub struct Planted {
    pub rows: Vec<Vec<f64>>,
    pub bounds: Vec<usize>,
    pub min_len: usize,
}

impl Planted {
    pub fn matrix(&self) -> GradientMatrix {
        GradientMatrix::from_rows(&self.rows).unwrap()
    }
}

pub fn planted(rng: &mut ChaCha8Rng) -> Planted {
    let k = rng.gen_range(1..=3);
    let min_len = rng.gen_range(1..=3);
    let total = rng.gen_range(2 * min_len.max(2)..=20);
    let mut bounds = Vec::new();
    let mut start = 0;
    loop {
        let remaining = total - start;
        if remaining < 2 * min_len || rng.gen_bool(0.3) {
            break;
        }
        let len = rng.gen_range(min_len..=remaining - min_len);
        start += len;
        bounds.push(start);
    }
    let mut rows = Vec::with_capacity(total);
    let mut level: Vec<f64> = (0..k).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let mut edges = bounds.clone();
    edges.push(total);
    let mut row = 0;
    for &end in &edges {
        while row < end {
            rows.push(level.clone());
            row += 1;
        }
        let col = rng.gen_range(0..k);
        for (c, v) in level.iter_mut().enumerate() {
            if c == col {
                *v += rng.gen_range(0.5..3.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            } else if rng.gen_bool(0.3) {
                *v = rng.gen_range(-3.0..3.0);
            }
        }
    }
    Planted { rows, bounds, min_len }
}

/// A straight-ish road of `n` samples with smooth synthetic readings.
pub fn smooth_road(id: &str, n: usize, k: usize, origin: (f64, f64), phase: f64) -> SignalSequence {
    let positions = (0..n)
        .map(|j| Position2D::new(origin.0 + j as f64, origin.1 + 0.2 * j as f64))
        .collect();
    let signals = (0..n)
        .map(|j| {
            let s = j as f64;
            SignalVector::new(
                (0..k)
                    .map(|b| -90.0 + 15.0 * ((s / 17.0 + phase + b as f64 * 1.3).sin()) - 0.05 * s * b as f64)
                    .collect(),
            )
            .unwrap()
        })
        .collect();
    SignalSequence::new(id, positions, signals).unwrap()
}

/// Three short roads with distinct readings, fast enough to map in tests.
pub fn small_scenario(k: usize) -> Scenario {
    let roads = vec![
        smooth_road("a", 90, k, (0.0, 0.0), 0.0),
        smooth_road("b", 70, k, (0.0, 100.0), 2.1),
        smooth_road("c", 80, k, (200.0, 0.0), 4.2),
    ];
    let bs = (0..k).map(|b| Position2D::new(50.0 * b as f64, 50.0)).collect();
    Scenario::new(bs, roads, None).unwrap()
}
