//! Comparison methods over the same training data: restricted weighted k-NN
//! and gradient fingerprinting on a uniform grid, and exhaustive search over
//! per-road fitted curves.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::curve_fit::{fit_curves, SubSegmentCurves};
use crate::error::{Error, Result};
use crate::features::gradients;
use crate::signal::{Position2D, Scenario, SignalSequence, SignalVector};

const WEIGHT_EPS: f64 = 1e-6;

/// Mean fingerprint of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub center: Position2D,
    pub rsrp: Vec<f64>,
    pub gradient: Vec<f64>,
    pub strongest: usize,
    pub samples: usize,
}

/// Uniform-grid fingerprint database; only cells holding samples are kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFingerprintDB {
    pub grid_size: f64,
    pub origin: Position2D,
    /// Samples of the mean gradient window.
    pub gradient_window: usize,
    pub cells: Vec<GridCell>,
}

/// Mean gradient over the `window` rows ending at each sample (fewer at the
/// start of a road).
pub fn trailing_gradients(seq: &SignalSequence, window: usize) -> Result<Vec<Vec<f64>>> {
    let g = gradients(seq)?;
    let window = window.max(1);
    Ok((0..seq.len())
        .map(|j| {
            let end = j.min(g.rows());
            let start = end.saturating_sub(window);
            let rows = (start..end.max(start + 1)).map(|r| r.min(g.rows() - 1));
            let n = rows.len() as f64;
            let mut mean = vec![0.0; g.cols()];
            for r in rows {
                for (m, v) in mean.iter_mut().zip(g.row(r)) {
                    *m += v / n;
                }
            }
            mean
        })
        .collect())
}

impl GridFingerprintDB {
    pub fn build(scenario: &Scenario, grid_size: f64, gradient_window: usize) -> Result<Self> {
        if !(grid_size > 0.0) {
            return Err(Error::InvalidInput("grid size must be positive".into()));
        }
        let positions = scenario.roads().iter().flat_map(|r| r.positions());
        let origin = positions.fold(Position2D::new(f64::INFINITY, f64::INFINITY), |m, p| {
            Position2D::new(m.x.min(p.x), m.y.min(p.y))
        });
        let k = scenario.bs_count();

        let mut acc: BTreeMap<(i64, i64), (Vec<f64>, Vec<f64>, usize)> = BTreeMap::new();
        for road in scenario.roads() {
            let grads = trailing_gradients(road, gradient_window)?;
            for ((p, o), g) in road.positions().iter().zip(road.signals()).zip(&grads) {
                let key = (
                    ((p.x - origin.x) / grid_size).floor() as i64,
                    ((p.y - origin.y) / grid_size).floor() as i64,
                );
                let entry = acc.entry(key).or_insert_with(|| (vec![0.0; k], vec![0.0; k], 0));
                entry.0.iter_mut().zip(o.as_slice()).for_each(|(a, v)| *a += v);
                entry.1.iter_mut().zip(g).for_each(|(a, v)| *a += v);
                entry.2 += 1;
            }
        }
        let cells = acc
            .into_iter()
            .map(|((cx, cy), (rsrp, grad, n))| {
                let rsrp: Vec<f64> = rsrp.into_iter().map(|v| v / n as f64).collect();
                GridCell {
                    center: Position2D::new(
                        origin.x + (cx as f64 + 0.5) * grid_size,
                        origin.y + (cy as f64 + 0.5) * grid_size,
                    ),
                    strongest: strongest(&rsrp),
                    rsrp,
                    gradient: grad.into_iter().map(|v| v / n as f64).collect(),
                    samples: n,
                }
            })
            .collect();
        Ok(Self {
            grid_size,
            origin,
            gradient_window,
            cells,
        })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

fn strongest(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// A baseline estimate with the scalar comparisons spent on it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineEstimate {
    pub position: Position2D,
    pub comparisons: usize,
}

/// Weighted k-NN over the cells whose strongest base station matches the
/// query's, or over all cells when none does.
pub fn rwknn_locate(db: &GridFingerprintDB, o: &SignalVector, k: usize) -> Result<BaselineEstimate> {
    if db.is_empty() {
        return Err(Error::InvalidInput("fingerprint database is empty".into()));
    }
    let q = o.as_slice();
    let top = o.strongest();
    let restricted: Vec<&GridCell> = db.cells.iter().filter(|c| c.strongest == top).collect();
    let pool: Vec<&GridCell> = if restricted.is_empty() {
        db.cells.iter().collect()
    } else {
        restricted
    };
    let mut scored: Vec<(f64, usize)> = pool
        .iter()
        .enumerate()
        .map(|(i, c)| (euclidean(q, &c.rsrp), i))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let (mut wx, mut wy, mut wsum) = (0.0, 0.0, 0.0);
    for &(d, i) in scored.iter().take(k.max(1)) {
        let w = 1.0 / (d + WEIGHT_EPS);
        wx += w * pool[i].center.x;
        wy += w * pool[i].center.y;
        wsum += w;
    }
    Ok(BaselineEstimate {
        position: Position2D::new(wx / wsum, wy / wsum),
        comparisons: pool.len() * q.len(),
    })
}

/// Cell whose mean gradient vector is nearest to the window's mean gradient
/// over its last `db.gradient_window` rows.
pub fn gift_locate(db: &GridFingerprintDB, window: &SignalSequence) -> Result<BaselineEstimate> {
    if db.is_empty() {
        return Err(Error::InvalidInput("fingerprint database is empty".into()));
    }
    let grads = trailing_gradients(window, db.gradient_window)?;
    let q = grads.last().expect("sequences hold two samples");
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in db.cells.iter().enumerate() {
        let d = euclidean(q, &c.gradient);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    Ok(BaselineEstimate {
        position: db.cells[best].center,
        comparisons: db.len() * q.len(),
    })
}

/// Per-road RSRP polynomials over arc length for exhaustive search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSearchModel {
    pub step: f64,
    pub road_ids: Vec<String>,
    pub curves: Vec<SubSegmentCurves>,
}

impl CurveSearchModel {
    pub fn fit(scenario: &Scenario, degree: usize, step: f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::InvalidInput("search step must be positive".into()));
        }
        let curves = scenario
            .roads()
            .iter()
            .map(|r| fit_curves(r, degree.min(r.len() - 1)).map_err(|e| e.context(format!("road {}", r.road_id()))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            step,
            road_ids: scenario.roads().iter().map(|r| r.road_id().to_string()).collect(),
            curves,
        })
    }

    /// Grid points searched per query.
    pub fn point_count(&self) -> usize {
        self.curves.iter().map(|c| self.points_on(c)).sum()
    }

    fn points_on(&self, c: &SubSegmentCurves) -> usize {
        (c.length() / self.step - 1e-9).ceil() as usize + 1
    }
}

/// Arc-length position minimizing the joint squared residual over every road
/// at `model.step` spacing; the earlier road and point win ties.
pub fn cfels_locate(model: &CurveSearchModel, o: &SignalVector) -> Result<CfelsEstimate> {
    let q = o.as_slice();
    let mut best: Option<(f64, usize, f64)> = None;
    let mut points = 0;
    for (r, c) in model.curves.iter().enumerate() {
        if c.bs_count() != q.len() {
            return Err(Error::DimensionMismatch {
                expected: c.bs_count(),
                actual: q.len(),
            });
        }
        let len = c.length();
        let n = model.points_on(c);
        for i in 0..n {
            let s = (i as f64 * model.step).min(len);
            let cost = c.cost(q, s / len);
            points += 1;
            if best.map_or(true, |(b, _, _)| cost < b) {
                best = Some((cost, r, s));
            }
        }
    }
    let (cost, road, s) = best.ok_or_else(|| Error::InvalidInput("no roads to search".into()))?;
    let c = &model.curves[road];
    Ok(CfelsEstimate {
        road,
        arc: s,
        cost,
        estimate: BaselineEstimate {
            position: c.position_at(s / c.length()),
            comparisons: points,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfelsEstimate {
    pub road: usize,
    /// Arc length along the road (m).
    pub arc: f64,
    pub cost: f64,
    pub estimate: BaselineEstimate,
}
