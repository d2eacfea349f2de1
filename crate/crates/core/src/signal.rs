//! Core signal types and the dataset CSV schema.
//!
//! A dataset is a CSV file with the header
//! `road_id,idx,x,y,rsrp_0,...,rsrp_{K-1}`. Column `rsrp_0` is always the
//! macro base station; the remaining columns are small cells. Rows belonging
//! to one road must appear with strictly increasing `idx`. Lines starting with
//! `#` are comments.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sensitivity floor. Readings below it are stored as this value and it also
/// stands for "no coverage".
pub const FLOOR_DBM: f64 = -140.0;

/// Position in a local metric frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position2D {
    pub x: f64,
    pub y: f64,
}

impl Position2D {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Linear interpolation, `t = 0` gives `self`.
    pub fn lerp(&self, other: &Position2D, t: f64) -> Position2D {
        Position2D::new(
            self.x + (other.x - self.x) * t,
            self.y + (other.y - self.y) * t,
        )
    }
}

/// RSRP readings from every base station at one position, in dBm.
///
/// Index 0 is the macro base station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SignalVector(Vec<f64>);

impl SignalVector {
    pub fn new(rsrp: Vec<f64>) -> Result<Self> {
        if rsrp.is_empty() {
            return Err(Error::InvalidInput("signal vector has no base stations".into()));
        }
        if let Some((k, v)) = rsrp
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= FLOOR_DBM && **v < 0.0))
        {
            return Err(Error::InvalidInput(format!(
                "rsrp[{k}] = {v} outside [{FLOOR_DBM}, 0) dBm"
            )));
        }
        Ok(Self(rsrp))
    }

    /// Builds a vector after clamping every reading to the floor.
    pub fn clamped(rsrp: Vec<f64>) -> Result<Self> {
        Self::new(rsrp.into_iter().map(|v| v.max(FLOOR_DBM)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Keeps the first `k` base stations.
    pub fn truncated(&self, k: usize) -> SignalVector {
        SignalVector(self.0[..k.min(self.0.len())].to_vec())
    }

    /// Index of the strongest base station (lowest index on ties).
    pub fn strongest(&self) -> usize {
        let mut best = 0;
        for (k, &v) in self.0.iter().enumerate() {
            if v > self.0[best] {
                best = k;
            }
        }
        best
    }
}

impl std::ops::Index<usize> for SignalVector {
    type Output = f64;

    fn index(&self, k: usize) -> &f64 {
        &self.0[k]
    }
}

/// The signal readings collected along one road in travel order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSequence {
    road_id: String,
    positions: Vec<Position2D>,
    signals: Vec<SignalVector>,
}

impl SignalSequence {
    pub fn new(
        road_id: impl Into<String>,
        positions: Vec<Position2D>,
        signals: Vec<SignalVector>,
    ) -> Result<Self> {
        let road_id = road_id.into();
        if positions.len() != signals.len() {
            return Err(Error::InvalidInput(format!(
                "road {road_id}: {} positions but {} signal vectors",
                positions.len(),
                signals.len()
            )));
        }
        if positions.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "road {road_id}: needs at least 2 samples, got {}",
                positions.len()
            )));
        }
        let k = signals[0].len();
        if let Some(j) = signals.iter().position(|s| s.len() != k) {
            return Err(Error::InvalidInput(format!(
                "road {road_id}: sample {j} has {} readings, expected {k}",
                signals[j].len()
            )));
        }
        if let Some(j) = positions.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "road {road_id}: sample {j} has a non-finite position"
            )));
        }
        if let Some(j) = positions.windows(2).position(|w| w[0].distance(&w[1]) <= 0.0) {
            return Err(Error::CoincidentPositions { road_id, index: j });
        }
        Ok(Self {
            road_id,
            positions,
            signals,
        })
    }

    pub fn road_id(&self) -> &str {
        &self.road_id
    }

    pub fn positions(&self) -> &[Position2D] {
        &self.positions
    }

    pub fn signals(&self) -> &[SignalVector] {
        &self.signals
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Number of base stations.
    pub fn bs_count(&self) -> usize {
        self.signals[0].len()
    }

    /// Samples `start..=end` as a new sequence under the same road id.
    pub fn slice(&self, start: usize, end: usize) -> Result<SignalSequence> {
        SignalSequence::new(
            self.road_id.clone(),
            self.positions[start..=end].to_vec(),
            self.signals[start..=end].to_vec(),
        )
    }

    /// Keeps the first `k` base-station columns.
    pub fn truncated(&self, k: usize) -> SignalSequence {
        SignalSequence {
            road_id: self.road_id.clone(),
            positions: self.positions.clone(),
            signals: self.signals.iter().map(|s| s.truncated(k)).collect(),
        }
    }

    /// Total path length in meters.
    pub fn length(&self) -> f64 {
        *arc_lengths(self).last().expect("sequence has at least 2 samples")
    }
}

/// Cumulative Euclidean distance along the sequence; starts at 0.
pub fn arc_lengths(seq: &SignalSequence) -> Vec<f64> {
    cumulative_distance(seq.positions())
}

pub(crate) fn cumulative_distance(positions: &[Position2D]) -> Vec<f64> {
    let mut out = Vec::with_capacity(positions.len());
    let mut acc = 0.0;
    out.push(acc);
    for w in positions.windows(2) {
        acc += w[0].distance(&w[1]);
        out.push(acc);
    }
    out
}

/// Axis-aligned bounds of an area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: Position2D,
    pub max: Position2D,
}

impl Bounds {
    pub fn contains(&self, p: &Position2D) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    fn of(points: impl Iterator<Item = Position2D>) -> Option<Bounds> {
        points.fold(None, |acc, p| {
            Some(match acc {
                None => Bounds { min: p, max: p },
                Some(b) => Bounds {
                    min: Position2D::new(b.min.x.min(p.x), b.min.y.min(p.y)),
                    max: Position2D::new(b.max.x.max(p.x), b.max.y.max(p.y)),
                },
            })
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMeta {
    /// Nominal distance between consecutive samples (m).
    pub sampling_interval: f64,
    pub bounds: Bounds,
}

/// A set of roads observed by the same `K` base stations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    bs_count: usize,
    /// Known only for generated scenarios; empty after CSV import.
    bs_positions: Vec<Position2D>,
    roads: Vec<SignalSequence>,
    meta: ScenarioMeta,
}

impl Scenario {
    pub fn new(
        bs_positions: Vec<Position2D>,
        roads: Vec<SignalSequence>,
        meta: Option<ScenarioMeta>,
    ) -> Result<Self> {
        let first = roads
            .first()
            .ok_or_else(|| Error::InvalidInput("scenario has no roads".into()))?;
        let k = first.bs_count();
        if let Some(r) = roads.iter().find(|r| r.bs_count() != k) {
            return Err(Error::InvalidInput(format!(
                "road {} has {} base stations, expected {k}",
                r.road_id(),
                r.bs_count()
            )));
        }
        if !bs_positions.is_empty() && bs_positions.len() != k {
            return Err(Error::InvalidInput(format!(
                "{} base-station positions for K = {k}",
                bs_positions.len()
            )));
        }
        let mut seen = HashMap::new();
        for (i, r) in roads.iter().enumerate() {
            if seen.insert(r.road_id().to_string(), i).is_some() {
                return Err(Error::InvalidInput(format!("duplicate road id {}", r.road_id())));
            }
        }
        let meta = match meta {
            Some(m) => m,
            None => derived_meta(&roads),
        };
        Ok(Self {
            bs_count: k,
            bs_positions,
            roads,
            meta,
        })
    }

    pub fn bs_count(&self) -> usize {
        self.bs_count
    }

    pub fn bs_positions(&self) -> &[Position2D] {
        &self.bs_positions
    }

    pub fn roads(&self) -> &[SignalSequence] {
        &self.roads
    }

    pub fn road(&self, road_id: &str) -> Option<&SignalSequence> {
        self.roads.iter().find(|r| r.road_id() == road_id)
    }

    pub fn meta(&self) -> &ScenarioMeta {
        &self.meta
    }

    /// Same roads observed by only the first `k` base stations.
    pub fn with_bs_count(&self, k: usize) -> Result<Scenario> {
        if k == 0 || k > self.bs_count {
            return Err(Error::InvalidInput(format!(
                "cannot keep {k} of {} base stations",
                self.bs_count
            )));
        }
        Ok(Scenario {
            bs_count: k,
            bs_positions: self.bs_positions.iter().take(k).copied().collect(),
            roads: self.roads.iter().map(|r| r.truncated(k)).collect(),
            meta: self.meta.clone(),
        })
    }
}

fn derived_meta(roads: &[SignalSequence]) -> ScenarioMeta {
    let mut gaps: Vec<f64> = roads
        .iter()
        .flat_map(|r| r.positions().windows(2).map(|w| w[0].distance(&w[1])))
        .collect();
    gaps.sort_by(f64::total_cmp);
    let sampling_interval = gaps[gaps.len() / 2];
    let bounds = Bounds::of(roads.iter().flat_map(|r| r.positions().iter().copied()))
        .expect("roads are nonempty");
    ScenarioMeta {
        sampling_interval,
        bounds,
    }
}

/// Parses the dataset CSV. Readings below [`FLOOR_DBM`] are clamped.
pub fn parse_dataset(text: &str) -> Result<Scenario> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let headers = reader.headers().map_err(|e| dataset_err(1, e.to_string()))?.clone();
    let header_line = reader.position().line();
    let names: Vec<&str> = headers.iter().collect();
    if names.len() < 5 || names[..4] != ["road_id", "idx", "x", "y"] {
        return Err(dataset_err(
            header_line,
            "header must start with road_id,idx,x,y followed by rsrp_0..rsrp_{K-1}",
        ));
    }
    for (k, name) in names[4..].iter().enumerate() {
        if *name != format!("rsrp_{k}") {
            return Err(dataset_err(
                header_line,
                format!("expected column rsrp_{k}, found {name:?}"),
            ));
        }
    }
    let k = names.len() - 4;

    struct Pending {
        last_idx: i64,
        positions: Vec<Position2D>,
        signals: Vec<SignalVector>,
        first_row: u64,
    }
    let mut order: Vec<String> = Vec::new();
    let mut pending: HashMap<String, Pending> = HashMap::new();

    for record in reader.records() {
        let record = record.map_err(|e| {
            let row = e.position().map(|p| p.line()).unwrap_or(0);
            dataset_err(row, e.to_string())
        })?;
        let row = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != names.len() {
            return Err(dataset_err(
                row,
                format!("expected {} fields, found {}", names.len(), record.len()),
            ));
        }
        let road_id = record[0].to_string();
        let idx: i64 = record[1]
            .parse()
            .map_err(|_| dataset_err(row, format!("idx {:?} is not an integer", &record[1])))?;
        let num = |col: usize| -> Result<f64> {
            record[col]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    dataset_err(
                        row,
                        format!("{} value {:?} is not a number", names[col], &record[col]),
                    )
                })
        };
        let pos = Position2D::new(num(2)?, num(3)?);
        let rsrp = (0..k).map(|c| num(4 + c)).collect::<Result<Vec<_>>>()?;
        let signal = SignalVector::clamped(rsrp).map_err(|e| dataset_err(row, e.to_string()))?;

        let entry = pending.entry(road_id.clone()).or_insert_with(|| {
            order.push(road_id.clone());
            Pending {
                last_idx: i64::MIN,
                positions: Vec::new(),
                signals: Vec::new(),
                first_row: row,
            }
        });
        if idx == entry.last_idx {
            return Err(dataset_err(
                row,
                format!("duplicate idx {idx} for road {road_id}"),
            ));
        }
        if idx < entry.last_idx {
            return Err(dataset_err(
                row,
                format!(
                    "idx {idx} for road {road_id} is out of order (previous {})",
                    entry.last_idx
                ),
            ));
        }
        entry.last_idx = idx;
        entry.positions.push(pos);
        entry.signals.push(signal);
    }

    let mut roads = Vec::with_capacity(order.len());
    for id in order {
        let p = pending.remove(&id).expect("road was recorded");
        let first_row = p.first_row;
        let seq = SignalSequence::new(id, p.positions, p.signals)
            .map_err(|e| dataset_err(first_row, e.to_string()))?;
        roads.push(seq);
    }
    Scenario::new(Vec::new(), roads, None)
}

fn dataset_err(row: u64, message: impl Into<String>) -> Error {
    Error::Dataset {
        row,
        message: message.into(),
    }
}

/// Writes a scenario in the dataset schema with 6 decimals.
pub fn serialize_dataset(scenario: &Scenario) -> String {
    let mut out = String::from("road_id,idx,x,y");
    for k in 0..scenario.bs_count() {
        let _ = write!(out, ",rsrp_{k}");
    }
    out.push('\n');
    for road in scenario.roads() {
        for (j, (p, s)) in road.positions().iter().zip(road.signals()).enumerate() {
            let _ = write!(out, "{},{j},{:.6},{:.6}", road.road_id(), p.x, p.y);
            for v in s.as_slice() {
                let _ = write!(out, ",{v:.6}");
            }
            out.push('\n');
        }
    }
    out
}

/// Writes the ground-truth schema `road_id,idx,x,y`.
pub fn serialize_ground_truth(scenario: &Scenario) -> String {
    let mut out = String::from("road_id,idx,x,y\n");
    for road in scenario.roads() {
        for (j, p) in road.positions().iter().enumerate() {
            let _ = writeln!(out, "{},{j},{:.6},{:.6}", road.road_id(), p.x, p.y);
        }
    }
    out
}
