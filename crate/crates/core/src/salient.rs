//! Salient feature selection by information gain and the sparse selection
//! masks built from it.
//!
//! Entropies are plug-in estimates over histograms: every feature value is
//! mapped to bin `floor(value / width)` and a feature subset is discretized
//! jointly as the tuple of its bins.

use std::collections::BTreeMap;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{windowed_features, FeatureKind, FeatureSet};
use crate::segmentation::SubSegment;
use crate::signal::SignalSequence;

/// Gains closer than this are treated as equal.
pub const GAIN_TIE_EPS: f64 = 1e-12;

/// Bin index to count.
pub type Histogram = BTreeMap<i64, usize>;

pub fn bin_of(value: f64, bin_width: f64) -> i64 {
    (value / bin_width).floor() as i64
}

pub fn discretize(values: &[f64], bin_width: f64) -> Result<Histogram> {
    check_width(bin_width)?;
    let mut hist = Histogram::new();
    for &v in values {
        *hist.entry(bin_of(v, bin_width)).or_insert(0) += 1;
    }
    Ok(hist)
}

fn check_width(bin_width: f64) -> Result<()> {
    if bin_width > 0.0 && bin_width.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("bin width {bin_width} must be positive")))
    }
}

/// Shannon entropy in bits.
pub fn entropy(hist: &Histogram) -> f64 {
    entropy_of_counts(hist.values().copied())
}

fn entropy_of_counts(counts: impl Iterator<Item = usize> + Clone) -> f64 {
    let total: usize = counts.clone().sum();
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    -counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / total;
            p * p.log2()
        })
        .sum::<f64>()
}

/// `H(label) - H(label | bin(feature))` in bits.
pub fn information_gain(labels: &[usize], values: &[f64], bin_width: f64) -> Result<f64> {
    let column: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
    joint_information_gain(labels, &column, &[0], &[bin_width])
}

/// Information gain of the features `subset` of each sample row, discretized
/// jointly.
pub fn joint_information_gain(
    labels: &[usize],
    samples: &[Vec<f64>],
    subset: &[usize],
    widths: &[f64],
) -> Result<f64> {
    let table = BinTable::new(labels, samples, widths)?;
    Ok(table.gain(subset, &mut Scratch::default()))
}

/// Dense bins of every feature column plus dense labels.
struct BinTable {
    n: usize,
    labels: Vec<u32>,
    classes: usize,
    /// Original label of each dense class.
    class_labels: Vec<usize>,
    /// `bins[f][i]` is the dense bin of sample `i` for feature `f`.
    bins: Vec<Vec<u32>>,
    radix: Vec<u128>,
    label_entropy: f64,
}

#[derive(Default)]
struct Scratch {
    groups: FxHashMap<u128, u32>,
    counts: Vec<u32>,
}

impl BinTable {
    fn new(labels: &[usize], samples: &[Vec<f64>], widths: &[f64]) -> Result<Self> {
        if labels.len() != samples.len() {
            return Err(Error::DimensionMismatch {
                expected: labels.len(),
                actual: samples.len(),
            });
        }
        let dim = widths.len();
        if let Some(row) = samples.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: row.len(),
            });
        }
        for &w in widths {
            check_width(w)?;
        }
        let mut dense_labels = BTreeMap::new();
        for &l in labels {
            let next = dense_labels.len() as u32;
            dense_labels.entry(l).or_insert(next);
        }
        if dense_labels.len() < 2 {
            return Err(Error::SingleLabel);
        }
        let mut class_labels = vec![0; dense_labels.len()];
        for (&label, &dense) in &dense_labels {
            class_labels[dense as usize] = label;
        }
        let labels: Vec<u32> = labels.iter().map(|l| dense_labels[l]).collect();
        let classes = dense_labels.len();

        let mut bins = Vec::with_capacity(dim);
        let mut radix = Vec::with_capacity(dim);
        for (f, &w) in widths.iter().enumerate() {
            let raw: Vec<i64> = samples.iter().map(|r| bin_of(r[f], w)).collect();
            let mut distinct: Vec<i64> = raw.clone();
            distinct.sort_unstable();
            distinct.dedup();
            bins.push(
                raw.iter()
                    .map(|b| distinct.binary_search(b).expect("bin is present") as u32)
                    .collect(),
            );
            radix.push(distinct.len() as u128);
        }

        let mut label_counts = vec![0usize; classes];
        for &l in &labels {
            label_counts[l as usize] += 1;
        }
        Ok(Self {
            n: samples.len(),
            labels,
            classes,
            class_labels,
            bins,
            radix,
            label_entropy: entropy_of_counts(label_counts.into_iter()),
        })
    }

    fn gain(&self, subset: &[usize], scratch: &mut Scratch) -> f64 {
        self.group(subset, scratch);
        let n = self.n as f64;
        let conditional: f64 = scratch
            .counts
            .chunks(self.classes)
            .map(|c| {
                let size: u32 = c.iter().sum();
                size as f64 / n * entropy_of_counts(c.iter().map(|&v| v as usize))
            })
            .sum();
        (self.label_entropy - conditional).max(0.0)
    }

    /// Fills `scratch.counts` with per-class counts of every joint bin.
    fn group(&self, subset: &[usize], scratch: &mut Scratch) {
        scratch.groups.clear();
        scratch.counts.clear();
        for i in 0..self.n {
            let mut key: u128 = 0;
            for &f in subset {
                key = key * self.radix[f] + self.bins[f][i] as u128;
            }
            let next = scratch.groups.len() as u32;
            let g = *scratch.groups.entry(key).or_insert(next);
            if g == next {
                scratch.counts.extend(std::iter::repeat(0).take(self.classes));
            }
            scratch.counts[g as usize * self.classes + self.labels[i] as usize] += 1;
        }
    }

    /// One-vs-rest gain of every class from a single grouping pass.
    fn gains_per_class(&self, subset: &[usize], class_entropy: &[f64], scratch: &mut Scratch) -> Vec<f64> {
        self.group(subset, scratch);
        let n = self.n as f64;
        let mut conditional = vec![0.0; self.classes];
        for c in scratch.counts.chunks(self.classes) {
            let size: u32 = c.iter().sum();
            for (e, &inside) in c.iter().enumerate() {
                let h = entropy_of_counts([inside as usize, (size - inside) as usize].into_iter());
                conditional[e] += size as f64 / n * h;
            }
        }
        class_entropy
            .iter()
            .zip(conditional)
            .map(|(h, c)| (h - c).max(0.0))
            .collect()
    }
}

/// Binary diagonal selection over a feature layout of size `dim`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionMask {
    dim: usize,
    selected: Vec<usize>,
}

impl SelectionMask {
    pub fn new(dim: usize, mut selected: Vec<usize>) -> Result<Self> {
        selected.sort_unstable();
        if selected.is_empty() {
            return Err(Error::InvalidInput("selection mask is empty".into()));
        }
        if selected.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput(format!("duplicate indices in mask {selected:?}")));
        }
        if let Some(&i) = selected.iter().find(|&&i| i >= dim) {
            return Err(Error::InvalidInput(format!("mask index {i} outside dim {dim}")));
        }
        Ok(Self { dim, selected })
    }

    pub fn full(dim: usize) -> Self {
        Self {
            dim,
            selected: (0..dim).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.selected.binary_search(&index).is_ok()
    }
}

/// Zeroes every unselected entry.
pub fn apply_mask(mask: &SelectionMask, e: &[f64]) -> Result<Vec<f64>> {
    if e.len() != mask.dim {
        return Err(Error::DimensionMismatch {
            expected: mask.dim,
            actual: e.len(),
        });
    }
    let mut out = vec![0.0; e.len()];
    for &i in &mask.selected {
        out[i] = e[i];
    }
    Ok(out)
}

/// Euclidean distance between two vectors restricted to the mask. Equal to
/// the distance between their masked forms.
pub fn masked_distance(mask: &SelectionMask, a: &[f64], b: &[f64]) -> f64 {
    mask.selected
        .iter()
        .map(|&i| (a[i] - b[i]).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// [`masked_distance`] with every coordinate divided by `scale`.
pub fn scaled_masked_distance(mask: &SelectionMask, a: &[f64], b: &[f64], scale: &[f64]) -> f64 {
    mask.selected
        .iter()
        .map(|&i| ((a[i] - b[i]) / scale[i]).powi(2))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub mask: SelectionMask,
    pub gain: f64,
}

/// Feature subset of size at most `f_max` with the largest joint information
/// gain about `labels`. Ties go to the smaller subset, then to the
/// lexicographically smaller one.
pub fn select_salient(
    labels: &[usize],
    samples: &[Vec<f64>],
    widths: &[f64],
    f_max: usize,
) -> Result<Selection> {
    let table = BinTable::new(labels, samples, widths)?;
    let dim = widths.len();
    if dim == 0 {
        return Err(Error::InvalidInput("no features to select from".into()));
    }
    let f_max = f_max.clamp(1, dim);
    let mut best: Option<(f64, Vec<usize>)> = None;

    for size in 1..=f_max {
        let combos = combinations(dim, size);
        let gains = evaluate(&table, &combos);
        for (gain, combo) in gains.into_iter().zip(combos) {
            if best.as_ref().map_or(true, |(g, _)| gain > g + GAIN_TIE_EPS) {
                best = Some((gain, combo));
            }
        }
        // Larger subsets can only tie a perfect split, and ties go smaller.
        if best.as_ref().is_some_and(|(g, _)| *g >= table.label_entropy - GAIN_TIE_EPS) {
            break;
        }
    }
    let (gain, subset) = best.expect("at least one subset evaluated");
    Ok(Selection {
        mask: SelectionMask::new(dim, subset)?,
        gain,
    })
}

/// [`select_salient`] for every label against all others at once: entry `e`
/// equals `select_salient` on the indicator labels `label == e`.
pub fn select_salient_one_vs_rest(
    labels: &[usize],
    classes: usize,
    samples: &[Vec<f64>],
    widths: &[f64],
    f_max: usize,
) -> Result<Vec<Selection>> {
    let table = BinTable::new(labels, samples, widths)?;
    if widths.is_empty() {
        return Err(Error::InvalidInput("no features to select from".into()));
    }
    if table.classes != classes || table.class_labels.iter().any(|&l| l >= classes) {
        return Err(Error::InvalidInput(format!(
            "labels must cover 0..{classes} exactly"
        )));
    }
    let dim = widths.len();
    let f_max = f_max.clamp(1, dim);
    let mut sizes = vec![0usize; classes];
    for &l in &table.labels {
        sizes[l as usize] += 1;
    }
    let class_entropy: Vec<f64> = sizes
        .iter()
        .map(|&s| entropy_of_counts([s, table.n - s].into_iter()))
        .collect();

    let mut best: Vec<Option<(f64, Vec<usize>)>> = vec![None; classes];
    let mut active: Vec<bool> = vec![true; classes];
    for size in 1..=f_max {
        let combos = combinations(dim, size);
        let gains = evaluate_per_class(&table, &class_entropy, &combos);
        for (g, combo) in gains.into_iter().zip(&combos) {
            for c in (0..classes).filter(|&c| active[c]) {
                if best[c].as_ref().map_or(true, |(b, _)| g[c] > b + GAIN_TIE_EPS) {
                    best[c] = Some((g[c], combo.clone()));
                }
            }
        }
        for c in 0..classes {
            if best[c].as_ref().is_some_and(|(g, _)| *g >= class_entropy[c] - GAIN_TIE_EPS) {
                active[c] = false;
            }
        }
        if !active.contains(&true) {
            break;
        }
    }
    let mut out: Vec<Option<Selection>> = vec![None; classes];
    for (dense, found) in best.into_iter().enumerate() {
        let (gain, subset) = found.expect("at least one subset evaluated");
        out[table.class_labels[dense]] = Some(Selection {
            mask: SelectionMask::new(dim, subset)?,
            gain,
        });
    }
    Ok(out.into_iter().map(|s| s.expect("every class present")).collect())
}

#[cfg(feature = "parallel")]
fn evaluate_per_class(table: &BinTable, class_entropy: &[f64], combos: &[Vec<usize>]) -> Vec<Vec<f64>> {
    use rayon::prelude::*;
    combos
        .par_iter()
        .map_init(Scratch::default, |scratch, c| table.gains_per_class(c, class_entropy, scratch))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn evaluate_per_class(table: &BinTable, class_entropy: &[f64], combos: &[Vec<usize>]) -> Vec<Vec<f64>> {
    let mut scratch = Scratch::default();
    combos
        .iter()
        .map(|c| table.gains_per_class(c, class_entropy, &mut scratch))
        .collect()
}

#[cfg(feature = "parallel")]
fn evaluate(table: &BinTable, combos: &[Vec<usize>]) -> Vec<f64> {
    use rayon::prelude::*;
    combos
        .par_iter()
        .map_init(Scratch::default, |scratch, c| table.gain(c, scratch))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn evaluate(table: &BinTable, combos: &[Vec<usize>]) -> Vec<f64> {
    let mut scratch = Scratch::default();
    combos.iter().map(|c| table.gain(c, &mut scratch)).collect()
}

/// All `size`-subsets of `0..dim` in lexicographic order.
fn combinations(dim: usize, size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if size == 0 || size > dim {
        return out;
    }
    let mut c: Vec<usize> = (0..size).collect();
    loop {
        out.push(c.clone());
        let mut i = size;
        while i > 0 && c[i - 1] == dim - size + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        c[i - 1] += 1;
        for j in i..size {
            c[j] = c[j - 1] + 1;
        }
    }
}

/// Fallback for a single entity: the `f_max` features with the largest
/// variance across samples, lowest index first on ties.
pub fn max_variance_mask(samples: &[Vec<f64>], dim: usize, f_max: usize) -> Result<SelectionMask> {
    let n = samples.len().max(1) as f64;
    let mut scored: Vec<(f64, usize)> = (0..dim)
        .map(|f| {
            let mean = samples.iter().map(|r| r[f]).sum::<f64>() / n;
            let var = samples.iter().map(|r| (r[f] - mean).powi(2)).sum::<f64>() / n;
            (var, f)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    SelectionMask::new(dim, scored.iter().take(f_max.clamp(1, dim)).map(|s| s.1).collect())
}

/// Tunables of salient feature selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SalientConfig {
    pub f_max: usize,
    /// Bin width for RSRP-derived kinds (dB or dB²).
    pub rsrp_bin: f64,
    /// Bin width for gradient features (dB/m).
    pub gradient_bin: f64,
    /// Window of the per-sample feature values (samples).
    pub window: usize,
}

impl Default for SalientConfig {
    fn default() -> Self {
        Self {
            f_max: 4,
            rsrp_bin: 4.0,
            gradient_bin: 0.4,
            window: 10,
        }
    }
}

impl SalientConfig {
    pub fn widths(&self, bs_count: usize) -> Vec<f64> {
        (0..FeatureKind::ALL.len() * bs_count)
            .map(|i| match FeatureKind::of_index(i, bs_count).0 {
                FeatureKind::MeanGradient => self.gradient_bin,
                _ => self.rsrp_bin,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Road,
    Subsegment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankEntry {
    pub entity: String,
    pub mask: SelectionMask,
    pub features: FeatureSet,
    /// Information gain of the mask in bits; `None` when the single-entity
    /// variance fallback chose it.
    pub gain: Option<f64>,
}

impl BankEntry {
    pub fn salient(&self) -> Vec<f64> {
        apply_mask(&self.mask, self.features.as_slice()).expect("mask matches the layout")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBank {
    pub scale: Scale,
    pub entries: Vec<BankEntry>,
}

impl FeatureBank {
    /// Total number of selected features.
    pub fn selected_count(&self) -> usize {
        self.entries.iter().map(|e| e.mask.len()).sum()
    }
}

/// A road cut into sub-segments.
#[derive(Debug, Clone)]
pub struct SegmentedRoad<'a> {
    pub road: &'a SignalSequence,
    pub subsegments: &'a [SubSegment],
    pub pieces: &'a [SignalSequence],
}

/// Picks one mask per entity by one-vs-rest information gain; with a single
/// entity falls back to [`max_variance_mask`].
fn entity_masks(
    entity_of_sample: &[usize],
    entities: usize,
    samples: &[Vec<f64>],
    widths: &[f64],
    f_max: usize,
) -> Result<Vec<(SelectionMask, Option<f64>)>> {
    if entities == 1 {
        let mask = max_variance_mask(samples, widths.len(), f_max)?;
        return Ok(vec![(mask, None)]);
    }
    Ok(select_salient_one_vs_rest(entity_of_sample, entities, samples, widths, f_max)?
        .into_iter()
        .map(|s| (s.mask, Some(s.gain)))
        .collect())
}

/// Road-scale bank and one sub-segment bank per road.
pub fn build_feature_banks(
    roads: &[SegmentedRoad<'_>],
    config: &SalientConfig,
) -> Result<(FeatureBank, Vec<FeatureBank>)> {
    let first = roads
        .first()
        .ok_or_else(|| Error::InvalidInput("no roads to build banks from".into()))?;
    let k = first.road.bs_count();
    let widths = config.widths(k);

    let per_sample: Vec<Vec<Vec<f64>>> = roads
        .iter()
        .map(|r| {
            windowed_features(r.road, config.window)
                .into_iter()
                .map(|f| f.as_slice().to_vec())
                .collect()
        })
        .collect();

    let mut road_of_sample = Vec::new();
    let mut all_samples = Vec::new();
    for (i, rows) in per_sample.iter().enumerate() {
        road_of_sample.extend(std::iter::repeat(i).take(rows.len()));
        all_samples.extend(rows.iter().cloned());
    }
    let road_masks = entity_masks(&road_of_sample, roads.len(), &all_samples, &widths, config.f_max)
        .map_err(|e| e.context("road-scale selection"))?;
    let road_bank = FeatureBank {
        scale: Scale::Road,
        entries: roads
            .iter()
            .zip(road_masks)
            .map(|(r, (mask, gain))| BankEntry {
                entity: r.road.road_id().to_string(),
                mask,
                features: crate::features::feature_set(r.road),
                gain,
            })
            .collect(),
    };

    let mut sub_banks = Vec::with_capacity(roads.len());
    for (r, rows) in roads.iter().zip(&per_sample) {
        // A shared boundary sample counts toward the segment it starts.
        let mut seg_of_sample = vec![0; rows.len()];
        for s in r.subsegments {
            for slot in &mut seg_of_sample[s.start..=s.end] {
                *slot = s.index;
            }
        }
        let masks = entity_masks(&seg_of_sample, r.subsegments.len(), rows, &widths, config.f_max)
            .map_err(|e| e.context(format!("sub-segment selection on road {}", r.road.road_id())))?;
        sub_banks.push(FeatureBank {
            scale: Scale::Subsegment,
            entries: r
                .subsegments
                .iter()
                .zip(r.pieces)
                .zip(masks)
                .map(|((s, piece), (mask, gain))| BankEntry {
                    entity: format!("{}#{}", s.road_id, s.index),
                    mask,
                    features: crate::features::feature_set(piece),
                    gain,
                })
                .collect(),
        });
    }
    Ok((road_bank, sub_banks))
}
