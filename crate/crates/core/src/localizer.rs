//! Offline radio-map construction and online two-scale localization.
//!
//! Online, a window of recent readings is reduced to one [`FeatureSet`]. The
//! road is chosen by masked feature distance to each road's bank entry, the
//! sub-segment by a Bayesian posterior over the chosen road's sub-segments,
//! and the position by inverting that sub-segment's RSRP curves at the most
//! recent reading.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::curve_fit::{fit_curves, locate_on_curve, CurveLocation, SubSegmentCurves};
use crate::error::{Error, Result};
use crate::features::{feature_set, gradients, FeatureSet, FEATURE_LAYOUT_VERSION, Q};
use crate::salient::{build_feature_banks, masked_distance, scaled_masked_distance, SalientConfig, SegmentedRoad, SelectionMask};
use crate::segmentation::{bottom_up_bounded, build_subsegments, MergeStop, SingularPointSet, SubSegment};
use crate::signal::{Position2D, Scenario, SignalSequence, SignalVector};

pub const MAP_SCHEMA: &str = "roadloc/radio-map";
pub const MAP_VERSION: u32 = 1;

/// How sub-segment priors within a road are assigned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorMode {
    /// Proportional to sub-segment arc length.
    Length,
    #[default]
    Uniform,
}

impl std::str::FromStr for PriorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "length" => Ok(PriorMode::Length),
            "uniform" => Ok(PriorMode::Uniform),
            other => Err(Error::Config(format!(
                "priors must be \"length\" or \"uniform\", got {other:?}"
            ))),
        }
    }
}

/// What a vehicle window is compared with at road scale, always under the
/// road's own mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoadReference {
    /// The closest of the road's sub-segment feature sets.
    #[default]
    Subsegments,
    /// The feature set of the whole road.
    Road,
}

impl std::str::FromStr for RoadReference {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "subsegments" => Ok(RoadReference::Subsegments),
            "road" => Ok(RoadReference::Road),
            other => Err(Error::Config(format!(
                "road_reference must be \"subsegments\" or \"road\", got {other:?}"
            ))),
        }
    }
}

/// Units of the feature distances used for matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceUnits {
    /// Each feature divided by its histogram bin width.
    #[default]
    Bins,
    /// Raw dB, dB/m and dB^2 values.
    Raw,
}

impl std::str::FromStr for DistanceUnits {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bins" => Ok(DistanceUnits::Bins),
            "raw" => Ok(DistanceUnits::Raw),
            other => Err(Error::Config(format!(
                "distance_units must be \"bins\" or \"raw\", got {other:?}"
            ))),
        }
    }
}

/// Map-building tunables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapConfig {
    /// Minimum sub-segment length in gradient rows; also the window of the
    /// per-sample features used for selection.
    pub l_min: usize,
    /// Maximum sub-segment length in gradient rows; `None` leaves only the
    /// penalty to stop merging.
    pub l_max: Option<usize>,
    /// Merge penalty; `None` means 0.25 per base station.
    pub pen: Option<f64>,
    pub f_max: usize,
    pub rsrp_bin: f64,
    pub gradient_bin: f64,
    pub degree: usize,
    /// Online window in samples; `None` means the median sub-segment size.
    pub window: Option<usize>,
    pub priors: PriorMode,
    pub road_reference: RoadReference,
    pub distance_units: DistanceUnits,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            l_min: 10,
            l_max: Some(30),
            pen: None,
            f_max: 4,
            rsrp_bin: 4.0,
            gradient_bin: 0.4,
            degree: 3,
            window: None,
            priors: PriorMode::Uniform,
            road_reference: RoadReference::Subsegments,
            distance_units: DistanceUnits::Bins,
        }
    }
}

impl MapConfig {
    pub fn penalty(&self, bs_count: usize) -> f64 {
        self.pen.unwrap_or(0.25 * bs_count as f64)
    }

    fn salient(&self) -> SalientConfig {
        SalientConfig {
            f_max: self.f_max,
            rsrp_bin: self.rsrp_bin,
            gradient_bin: self.gradient_bin,
            window: self.l_min,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.l_min == 0 {
            return Err(Error::Config("l_min must be at least 1".into()));
        }
        if self.l_max.is_some_and(|m| m < 2 * self.l_min) {
            return Err(Error::Config("l_max must be at least twice l_min".into()));
        }
        if self.f_max == 0 {
            return Err(Error::Config("f_max must be at least 1".into()));
        }
        if !(self.rsrp_bin > 0.0) || !(self.gradient_bin > 0.0) {
            return Err(Error::Config("bin widths must be positive".into()));
        }
        if self.pen.is_some_and(|p| !(p >= 0.0)) {
            return Err(Error::Config("pen must be non-negative".into()));
        }
        if self.window.is_some_and(|w| w < 2) {
            return Err(Error::Config("window must hold at least two samples".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubSegmentEntry {
    pub info: SubSegment,
    pub mask: SelectionMask,
    pub features: FeatureSet,
    /// `None` when the road has a single sub-segment and the mask is the
    /// variance fallback.
    pub gain: Option<f64>,
    pub curves: SubSegmentCurves,
    pub prior: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadEntry {
    pub road_id: String,
    pub length: f64,
    pub singular_points: SingularPointSet,
    pub mask: SelectionMask,
    pub features: FeatureSet,
    pub gain: Option<f64>,
    pub subsegments: Vec<SubSegmentEntry>,
}

impl RoadEntry {
    /// Salient features compared at sub-segment scale on this road.
    pub fn n_s(&self) -> usize {
        self.subsegments.iter().map(|s| s.mask.len()).sum()
    }

    /// Road-scale distance of `e_u` and the scalar comparisons it took.
    pub fn road_distance(&self, e_u: &[f64], reference: RoadReference, scale: &[f64]) -> (f64, usize) {
        match reference {
            RoadReference::Road => (
                scaled_masked_distance(&self.mask, e_u, self.features.as_slice(), scale),
                self.mask.len(),
            ),
            RoadReference::Subsegments => (
                self.subsegments
                    .iter()
                    .map(|s| scaled_masked_distance(&self.mask, e_u, s.features.as_slice(), scale))
                    .fold(f64::INFINITY, f64::min),
                self.mask.len() * self.subsegments.len(),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioMap {
    pub schema: String,
    pub version: u32,
    pub feature_layout_version: u32,
    pub q: usize,
    pub bs_count: usize,
    /// Configuration with the penalty and window resolved.
    pub config: MapConfig,
    pub window: usize,
    /// Divisor of each feature in matching distances.
    pub feature_scale: Vec<f64>,
    pub roads: Vec<RoadEntry>,
}

impl RadioMap {
    /// Salient features compared at road scale.
    pub fn n_r(&self) -> usize {
        self.roads.iter().map(|r| r.mask.len()).sum()
    }

    pub fn road_index(&self, road_id: &str) -> Option<usize> {
        self.roads.iter().position(|r| r.road_id == road_id)
    }

    pub fn subsegment_count(&self) -> usize {
        self.roads.iter().map(|r| r.subsegments.len()).sum()
    }

    fn check_inputs(&self, e_u: &FeatureSet, o: Option<&SignalVector>) -> Result<()> {
        if e_u.dim() != self.q * self.bs_count {
            return Err(Error::DimensionMismatch {
                expected: self.q * self.bs_count,
                actual: e_u.dim(),
            });
        }
        if let Some(o) = o {
            if o.len() != self.bs_count {
                return Err(Error::DimensionMismatch {
                    expected: self.bs_count,
                    actual: o.len(),
                });
            }
        }
        Ok(())
    }
}

/// Segments every road, selects salient features at both scales and fits
/// sub-segment curves.
pub fn build_map(scenario: &Scenario, config: &MapConfig) -> Result<RadioMap> {
    config.validate()?;
    let k = scenario.bs_count();
    let pen = config.penalty(k);

    let mut segmented = Vec::with_capacity(scenario.roads().len());
    for road in scenario.roads() {
        let g = gradients(road)?;
        let points = if g.rows() < 2 * config.l_min {
            SingularPointSet::default()
        } else {
            bottom_up_bounded(&g, config.l_min, config.l_max, MergeStop::Penalty(pen))
                .map_err(|e| e.context(format!("segmenting road {}", road.road_id())))?
        };
        let (subs, pieces) = build_subsegments(road, &points)?;
        segmented.push((points, subs, pieces));
    }

    let views: Vec<SegmentedRoad<'_>> = scenario
        .roads()
        .iter()
        .zip(&segmented)
        .map(|(road, (_, subs, pieces))| SegmentedRoad {
            road,
            subsegments: subs,
            pieces,
        })
        .collect();
    let (road_bank, sub_banks) = build_feature_banks(&views, &config.salient())?;

    let mut roads = Vec::with_capacity(views.len());
    for (((road, (points, subs, pieces)), road_entry), bank) in scenario
        .roads()
        .iter()
        .zip(segmented)
        .zip(road_bank.entries)
        .zip(sub_banks)
    {
        let total: f64 = subs.iter().map(SubSegment::length).sum();
        let uniform = 1.0 / subs.len() as f64;
        let subsegments = subs
            .into_iter()
            .zip(&pieces)
            .zip(bank.entries)
            .map(|((info, piece), entry)| {
                let degree = config.degree.min(piece.len() - 1);
                let curves = fit_curves(piece, degree)
                    .map_err(|e| e.context(format!("fitting {}", entry.entity)))?;
                let prior = match config.priors {
                    PriorMode::Length => info.length() / total,
                    PriorMode::Uniform => uniform,
                };
                Ok(SubSegmentEntry {
                    info,
                    mask: entry.mask,
                    features: entry.features,
                    gain: entry.gain,
                    curves,
                    prior,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        roads.push(RoadEntry {
            road_id: road.road_id().to_string(),
            length: road.length(),
            singular_points: points,
            mask: road_entry.mask,
            features: road_entry.features,
            gain: road_entry.gain,
            subsegments,
        });
    }

    let window = config.window.unwrap_or_else(|| {
        let mut sizes: Vec<usize> = roads
            .iter()
            .flat_map(|r| r.subsegments.iter().map(|s| s.info.sample_count()))
            .collect();
        sizes.sort_unstable();
        sizes[sizes.len() / 2]
    });
    Ok(RadioMap {
        schema: MAP_SCHEMA.to_string(),
        version: MAP_VERSION,
        feature_layout_version: FEATURE_LAYOUT_VERSION,
        q: Q,
        bs_count: k,
        config: MapConfig {
            pen: Some(pen),
            window: Some(window),
            ..*config
        },
        window,
        feature_scale: match config.distance_units {
            DistanceUnits::Bins => config.salient().widths(k),
            DistanceUnits::Raw => vec![1.0; Q * k],
        },
        roads,
    })
}

/// `exp(-d)` for the masked distance `d` between two feature vectors.
pub fn road_match_probability(mask: &SelectionMask, e_u: &[f64], e_r: &[f64]) -> f64 {
    (-masked_distance(mask, e_u, e_r)).exp()
}

/// Normalized Bayes posterior over candidates with match distances
/// `distances` and priors `priors`, all scaled by the common road match
/// probability.
pub fn bayes_posterior(road_probability: f64, priors: &[f64], distances: &[f64]) -> Result<Vec<f64>> {
    if priors.len() != distances.len() || priors.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{} priors for {} candidates",
            priors.len(),
            distances.len()
        )));
    }
    if !(road_probability > 0.0) || priors.iter().any(|&p| !(p > 0.0)) {
        return Err(Error::InvalidInput("probabilities must be positive".into()));
    }
    Ok(log_posterior(road_probability.ln(), priors, distances))
}

// Log domain keeps large distances from underflowing to 0/0.
fn log_posterior(log_road: f64, priors: &[f64], distances: &[f64]) -> Vec<f64> {
    let logs: Vec<f64> = priors
        .iter()
        .zip(distances)
        .map(|(p, d)| log_road + p.ln() - d)
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let sum: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / sum).collect()
}

/// Posterior of every sub-segment of road `road` given the vehicle features.
pub fn subsegment_posterior(e_u: &FeatureSet, map: &RadioMap, road: usize) -> Result<Vec<f64>> {
    map.check_inputs(e_u, None)?;
    let entry = map
        .roads
        .get(road)
        .ok_or_else(|| Error::InvalidInput(format!("map has no road {road}")))?;
    let v = e_u.as_slice();
    let (road_distance, _) = entry.road_distance(v, map.config.road_reference, &map.feature_scale);
    let (priors, distances): (Vec<f64>, Vec<f64>) = entry
        .subsegments
        .iter()
        .map(|s| {
            let d = scaled_masked_distance(&s.mask, v, s.features.as_slice(), &map.feature_scale);
            (s.prior, d)
        })
        .unzip();
    Ok(log_posterior(-road_distance, &priors, &distances))
}

/// Work done by one query.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkCounters {
    /// Scalar feature comparisons in road and sub-segment matching.
    pub feature_comparisons: usize,
    /// Single-BS polynomial evaluations during curve inversion.
    pub curve_evaluations: usize,
    pub bs_count: usize,
}

impl WorkCounters {
    /// Feature comparisons plus the `K` readings compared at one curve point.
    pub fn comparisons(&self) -> usize {
        self.feature_comparisons + self.bs_count
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowMatch {
    pub road_index: usize,
    pub subsegment: usize,
    pub posterior: f64,
    /// Road match probability per road.
    pub road_probabilities: Vec<f64>,
    /// Posterior per sub-segment of the chosen road.
    pub subsegment_probabilities: Vec<f64>,
    pub feature_comparisons: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationResult {
    pub road_id: String,
    pub road_index: usize,
    pub subsegment: usize,
    pub posterior: f64,
    pub position: Position2D,
    /// Normalized arc length inside the sub-segment.
    pub t: f64,
    /// Curve residual at the estimate (dB RMS).
    pub residual_db: f64,
    pub road_probabilities: Vec<f64>,
    pub subsegment_probabilities: Vec<f64>,
    pub elapsed_ms: f64,
    pub work: WorkCounters,
}

fn first_argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Road, then sub-segment of that road. Ties go to the smaller index.
pub fn match_window(e_u: &FeatureSet, map: &RadioMap) -> Result<WindowMatch> {
    map.check_inputs(e_u, None)?;
    let v = e_u.as_slice();
    let mut feature_comparisons = 0;
    let road_probabilities: Vec<f64> = map
        .roads
        .iter()
        .map(|r| {
            let (d, n) = r.road_distance(v, map.config.road_reference, &map.feature_scale);
            feature_comparisons += n;
            (-d).exp()
        })
        .collect();
    let road_index = first_argmax(&road_probabilities);
    let road = &map.roads[road_index];

    let posterior = subsegment_posterior(e_u, map, road_index)?;
    feature_comparisons += road.n_s();
    let subsegment = first_argmax(&posterior);
    Ok(WindowMatch {
        road_index,
        subsegment,
        posterior: posterior[subsegment],
        road_probabilities,
        subsegment_probabilities: posterior,
        feature_comparisons,
    })
}

/// Position of reading `o` on the curves of the matched sub-segment.
pub fn refine(map: &RadioMap, m: &WindowMatch, o: &SignalVector) -> Result<CurveLocation> {
    if o.len() != map.bs_count {
        return Err(Error::DimensionMismatch {
            expected: map.bs_count,
            actual: o.len(),
        });
    }
    let curves = &map
        .roads
        .get(m.road_index)
        .and_then(|r| r.subsegments.get(m.subsegment))
        .ok_or_else(|| Error::InvalidInput("match does not belong to this map".into()))?
        .curves;
    Ok(locate_on_curve(curves, o))
}

/// Road, then sub-segment, then position at the latest reading.
pub fn localize(e_u: &FeatureSet, o_latest: &SignalVector, map: &RadioMap) -> Result<LocalizationResult> {
    map.check_inputs(e_u, Some(o_latest))?;
    let clock = Stopwatch::start();
    let m = match_window(e_u, map)?;
    let location = refine(map, &m, o_latest)?;
    let elapsed_ms = clock.elapsed_ms();

    Ok(LocalizationResult {
        road_id: map.roads[m.road_index].road_id.clone(),
        road_index: m.road_index,
        subsegment: m.subsegment,
        posterior: m.posterior,
        position: location.position,
        t: location.t,
        residual_db: location.residual,
        road_probabilities: m.road_probabilities,
        subsegment_probabilities: m.subsegment_probabilities,
        elapsed_ms,
        work: WorkCounters {
            feature_comparisons: m.feature_comparisons,
            curve_evaluations: location.evaluations,
            bs_count: map.bs_count,
        },
    })
}

/// Extracts the window's features and localizes at its latest sample.
pub fn localize_window(window: &SignalSequence, map: &RadioMap) -> Result<LocalizationResult> {
    let e_u = feature_set(window);
    let latest = window.signals().last().expect("sequences hold two samples");
    localize(&e_u, latest, map)
}

/// Wall clock that reads zero where no monotonic clock is available.
struct Stopwatch {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
}

impl Stopwatch {
    fn start() -> Self {
        Self {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
        }
    }

    fn elapsed_ms(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        return self.start.elapsed().as_secs_f64() * 1e3;
        #[cfg(target_arch = "wasm32")]
        return 0.0;
    }
}

/// Recent readings of a moving vehicle with odometry spacing.
#[derive(Debug, Clone)]
pub struct SignalBuffer {
    capacity: usize,
    samples: VecDeque<(SignalVector, f64)>,
}

impl SignalBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(2),
            samples: VecDeque::with_capacity(capacity),
        }
    }

    /// Adds a reading taken `spacing` meters after the previous one.
    pub fn push(&mut self, o: SignalVector, spacing: f64) {
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back((o, spacing));
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// The latest `w` readings laid out along the x axis by their spacing.
    pub fn extract_window(&self, w: usize) -> Result<SignalSequence> {
        if w > self.samples.len() {
            return Err(Error::TooShort(format!(
                "window of {w} needs {w} buffered samples, have {}",
                self.samples.len()
            )));
        }
        let recent = self.samples.range(self.samples.len() - w..);
        let mut x = 0.0;
        let mut positions = Vec::with_capacity(w);
        let mut signals = Vec::with_capacity(w);
        for (i, (o, spacing)) in recent.enumerate() {
            if i > 0 {
                x += spacing;
            }
            positions.push(Position2D::new(x, 0.0));
            signals.push(o.clone());
        }
        SignalSequence::new("window", positions, signals)
    }
}

#[derive(Deserialize)]
struct Header {
    schema: String,
    version: u32,
    feature_layout_version: u32,
}

pub fn save_map(map: &RadioMap) -> String {
    serde_json::to_string_pretty(map).expect("maps serialize")
}

fn parse_error(text: &str, e: serde_json::Error) -> Error {
    let line_start: usize = text
        .split_inclusive('\n')
        .take(e.line().saturating_sub(1))
        .map(str::len)
        .sum();
    Error::MapParse {
        offset: (line_start + e.column().saturating_sub(1)).min(text.len()),
        message: e.to_string(),
    }
}

/// Parses a map written by [`save_map`], refusing other schema versions.
pub fn load_map(text: &str) -> Result<RadioMap> {
    let header: Header = serde_json::from_str(text).map_err(|e| parse_error(text, e))?;
    if header.schema != MAP_SCHEMA {
        return Err(Error::MapVersion {
            field: "schema",
            found: header.schema,
            expected: MAP_SCHEMA.to_string(),
        });
    }
    if header.version != MAP_VERSION {
        return Err(Error::MapVersion {
            field: "version",
            found: header.version.to_string(),
            expected: MAP_VERSION.to_string(),
        });
    }
    if header.feature_layout_version != FEATURE_LAYOUT_VERSION {
        return Err(Error::MapVersion {
            field: "feature_layout_version",
            found: header.feature_layout_version.to_string(),
            expected: FEATURE_LAYOUT_VERSION.to_string(),
        });
    }
    let map: RadioMap = serde_json::from_str(text).map_err(|e| parse_error(text, e))?;
    if map.roads.is_empty() || map.q != Q {
        return Err(Error::InvalidInput("map has no roads or a foreign feature count".into()));
    }
    Ok(map)
}
