//! Splitting a road into gradient-homogeneous sub-segments.
//!
//! Boundaries ("singular points") index gradient rows. A boundary `b` is the
//! first row of the segment to its right, so the segment between boundaries
//! `b_l` and `b_{l+1}` covers gradient rows `b_l..b_{l+1}` and samples
//! `b_l..=b_{l+1}`. Neighbouring sub-segments share their boundary sample.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::GradientMatrix;
use crate::signal::{arc_lengths, Position2D, SignalSequence};

/// Largest gradient row count accepted by [`exhaustive_segment_oracle`].
pub const ORACLE_MAX_ROWS: usize = 25;

/// Strictly increasing boundary indices.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SingularPointSet(Vec<usize>);

impl SingularPointSet {
    pub fn new(indices: Vec<usize>) -> Self {
        Self(indices)
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn segment_count(&self) -> usize {
        self.0.len() + 1
    }

    /// Half-open row ranges induced over `rows` gradient rows.
    pub fn ranges(&self, rows: usize) -> Vec<(usize, usize)> {
        let mut edges = Vec::with_capacity(self.0.len() + 2);
        edges.push(0);
        edges.extend_from_slice(&self.0);
        edges.push(rows);
        edges.windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// Checks ordering and range against `rows` gradient rows, and optionally
    /// a minimum segment length.
    pub fn validate(&self, rows: usize, min_len: usize) -> Result<()> {
        if self.0.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(format!(
                "singular points {:?} are not strictly increasing",
                self.0
            )));
        }
        if let Some(b) = self.0.iter().find(|&&b| b == 0 || b >= rows) {
            return Err(Error::InvalidInput(format!(
                "singular point {b} outside [1, {}]",
                rows.saturating_sub(1)
            )));
        }
        if let Some((s, e)) = self.ranges(rows).into_iter().find(|(s, e)| e - s < min_len) {
            return Err(Error::InvalidInput(format!(
                "segment {s}..{e} shorter than {min_len} rows"
            )));
        }
        Ok(())
    }
}

/// Within-segment squared deviation of each gradient column from its segment
/// mean, divided by the segment length, summed over segments and columns.
pub fn segment_cost(g: &GradientMatrix, points: &SingularPointSet) -> Result<f64> {
    points.validate(g.rows(), 1)?;
    Ok(points
        .ranges(g.rows())
        .into_iter()
        .map(|(s, e)| range_cost(g, s, e))
        .sum())
}

fn range_cost(g: &GradientMatrix, start: usize, end: usize) -> f64 {
    let n = (end - start) as f64;
    (0..g.cols())
        .map(|k| {
            let mean = (start..end).map(|j| g.get(j, k)).sum::<f64>() / n;
            (start..end).map(|j| (g.get(j, k) - mean).powi(2)).sum::<f64>() / n
        })
        .sum()
}

/// When the bottom-up merge loop stops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MergeStop {
    /// Stop once the cheapest merge would raise the cost by more than this.
    Penalty(f64),
    /// Stop at this many segments.
    Count(usize),
}

/// Bottom-up segmentation with a merge penalty.
pub fn bottom_up_segment(g: &GradientMatrix, min_len: usize, pen: f64) -> Result<SingularPointSet> {
    bottom_up(g, min_len, MergeStop::Penalty(pen))
}

/// Bottom-up segmentation.
///
/// Starts from single-row segments and repeatedly merges the adjacent pair
/// whose merge raises [`segment_cost`] the least, leftmost pair first on ties.
/// While a segment is shorter than `min_len`, only pairs touching such a
/// segment are eligible and the stop rule is not consulted.
pub fn bottom_up(g: &GradientMatrix, min_len: usize, stop: MergeStop) -> Result<SingularPointSet> {
    bottom_up_bounded(g, min_len, None, stop)
}

/// [`bottom_up`] where merges that would exceed `max_len` rows are skipped,
/// unless a segment shorter than `min_len` has no other option.
pub fn bottom_up_bounded(
    g: &GradientMatrix,
    min_len: usize,
    max_len: Option<usize>,
    stop: MergeStop,
) -> Result<SingularPointSet> {
    let min_len = min_len.max(1);
    let max_len = max_len.unwrap_or(usize::MAX);
    if g.rows() < 2 * min_len {
        return Err(Error::TooShort(format!(
            "{} gradient rows cannot hold two segments of {min_len}",
            g.rows()
        )));
    }

    let mut segs: Vec<(usize, usize)> = (0..g.rows()).map(|j| (j, j + 1)).collect();
    let mut costs: Vec<f64> = segs.iter().map(|&(s, e)| range_cost(g, s, e)).collect();
    let merge_delta = |segs: &[(usize, usize)], costs: &[f64], i: usize| {
        range_cost(g, segs[i].0, segs[i + 1].1) - costs[i] - costs[i + 1]
    };
    let mut deltas: Vec<f64> = (0..segs.len() - 1).map(|i| merge_delta(&segs, &costs, i)).collect();

    while segs.len() > 1 {
        let short = |i: usize| segs[i].1 - segs[i].0 < min_len;
        let any_short = (0..segs.len()).any(short);
        let eligible = |i: usize| !any_short || short(i) || short(i + 1);
        let fits = |i: usize| segs[i + 1].1 - segs[i].0 <= max_len;
        let pick = |capped: bool| {
            let mut best: Option<usize> = None;
            for (i, &d) in deltas.iter().enumerate() {
                if eligible(i) && (!capped || fits(i)) && best.map_or(true, |b| d < deltas[b]) {
                    best = Some(i);
                }
            }
            best
        };
        // Short segments must merge even when every option exceeds the cap.
        let best = pick(true).or_else(|| if any_short { pick(false) } else { None });
        let Some(i) = best else { break };
        if !any_short {
            let done = match stop {
                MergeStop::Penalty(pen) => deltas[i] > pen,
                MergeStop::Count(n) => segs.len() <= n.max(1),
            };
            if done {
                break;
            }
        }

        segs[i].1 = segs[i + 1].1;
        costs[i] = range_cost(g, segs[i].0, segs[i].1);
        segs.remove(i + 1);
        costs.remove(i + 1);
        deltas.remove(i);
        if i < deltas.len() {
            deltas[i] = merge_delta(&segs, &costs, i);
        }
        if i > 0 {
            deltas[i - 1] = merge_delta(&segs, &costs, i - 1);
        }
    }

    Ok(SingularPointSet(segs[1..].iter().map(|s| s.0).collect()))
}

/// Globally optimal boundaries of the given cardinality by enumeration.
/// Lexicographically smallest set on cost ties.
pub fn exhaustive_segment_oracle(
    g: &GradientMatrix,
    n_segments: usize,
    min_len: usize,
) -> Result<SingularPointSet> {
    let rows = g.rows();
    if rows > ORACLE_MAX_ROWS {
        return Err(Error::Guard(format!(
            "{rows} gradient rows exceeds the oracle limit of {ORACLE_MAX_ROWS}"
        )));
    }
    if n_segments == 0 {
        return Err(Error::InvalidInput("n_segments must be at least 1".into()));
    }
    let min_len = min_len.max(1);

    struct Search<'a> {
        g: &'a GradientMatrix,
        min_len: usize,
        best: Option<(f64, Vec<usize>)>,
        current: Vec<usize>,
    }

    impl Search<'_> {
        fn run(&mut self, start: usize, remaining: usize) {
            let rows = self.g.rows();
            if remaining == 0 {
                if rows - start < self.min_len {
                    return;
                }
                let cost = segment_cost(self.g, &SingularPointSet(self.current.clone()))
                    .expect("enumerated boundaries are valid");
                if self.best.as_ref().map_or(true, |(c, _)| cost < *c) {
                    self.best = Some((cost, self.current.clone()));
                }
                return;
            }
            let first = start + self.min_len;
            let last = rows.saturating_sub(remaining * self.min_len);
            for b in first..=last {
                self.current.push(b);
                self.run(b, remaining - 1);
                self.current.pop();
            }
        }
    }

    let mut search = Search {
        g,
        min_len,
        best: None,
        current: Vec::new(),
    };
    search.run(0, n_segments - 1);
    search
        .best
        .map(|(_, b)| SingularPointSet(b))
        .ok_or_else(|| {
            Error::InvalidInput(format!(
                "{rows} rows cannot hold {n_segments} segments of at least {min_len}"
            ))
        })
}

/// One piece of a road between two singular points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubSegment {
    pub road_id: String,
    pub index: usize,
    /// First sample (inclusive).
    pub start: usize,
    /// Last sample (inclusive).
    pub end: usize,
    pub midpoint_index: usize,
    pub midpoint: Position2D,
    /// Arc length of `start` and `end` along the road (m).
    pub arc_start: f64,
    pub arc_end: f64,
}

impl SubSegment {
    pub fn sample_count(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn length(&self) -> f64 {
        self.arc_end - self.arc_start
    }

    pub fn contains(&self, sample: usize) -> bool {
        (self.start..=self.end).contains(&sample)
    }
}

/// Cuts a road at its singular points.
pub fn build_subsegments(
    seq: &SignalSequence,
    points: &SingularPointSet,
) -> Result<(Vec<SubSegment>, Vec<SignalSequence>)> {
    let rows = seq.len() - 1;
    points.validate(rows, 1)?;
    let arc = arc_lengths(seq);
    let mut subs = Vec::with_capacity(points.segment_count());
    let mut pieces = Vec::with_capacity(points.segment_count());
    for (index, (start, end)) in points.ranges(rows).into_iter().enumerate() {
        let midpoint_index = (start + end + 1) / 2;
        subs.push(SubSegment {
            road_id: seq.road_id().to_string(),
            index,
            start,
            end,
            midpoint_index,
            midpoint: seq.positions()[midpoint_index],
            arc_start: arc[start],
            arc_end: arc[end],
        });
        pieces.push(seq.slice(start, end)?);
    }
    Ok((subs, pieces))
}
