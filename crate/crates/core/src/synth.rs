//! Synthetic heterogeneous-network scenarios: road polylines sampled at a
//! fixed interval, log-distance path loss and spatially correlated shadowing.
//!
//! Shadowing is a sum of random cosines whose wave vectors follow a 2D Cauchy
//! law scaled by the decorrelation distance, which gives the field an
//! exponential autocorrelation `sigma^2 * exp(-r / d_corr)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{
    Bounds, Position2D, Scenario, ScenarioMeta, SignalSequence, SignalVector, FLOOR_DBM,
};

/// Reference distance of the path-loss model (m).
pub const REFERENCE_DISTANCE: f64 = 1.0;
/// Distance used when a position coincides with a base station (m).
pub const GUARD_DISTANCE: f64 = 0.5;
/// Generated readings at or above 0 dBm are stored as this.
pub const CEILING_DBM: f64 = -1e-3;

const SHADOW_COMPONENTS: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Transmit power per base station (dBm).
    pub tx_power_dbm: Vec<f64>,
    /// Path-loss exponent per base station.
    pub exponent: Vec<f64>,
    /// Path loss at the reference distance (dB).
    pub pl0_db: f64,
    pub shadowing_sigma_db: f64,
    /// Decorrelation distance of the shadowing (m); 0 gives independent draws.
    pub correlation_m: f64,
    pub seed: u64,
}

impl ChannelParams {
    /// Macro cell first, then `bs_count - 1` small cells.
    pub fn hetnet(bs_count: usize, seed: u64) -> Self {
        let class = |macro_v: f64, small_v: f64| {
            (0..bs_count)
                .map(|k| if k == 0 { macro_v } else { small_v })
                .collect::<Vec<_>>()
        };
        Self {
            tx_power_dbm: class(46.0, 30.0),
            exponent: class(3.0, 3.5),
            pl0_db: 40.0,
            shadowing_sigma_db: 4.0,
            correlation_m: 20.0,
            seed,
        }
    }

    fn validate(&self, bs_count: usize) -> Result<()> {
        if self.tx_power_dbm.len() != bs_count || self.exponent.len() != bs_count {
            return Err(Error::InvalidInput(format!(
                "channel parameters list {} powers and {} exponents for {bs_count} base stations",
                self.tx_power_dbm.len(),
                self.exponent.len()
            )));
        }
        if self.exponent.iter().any(|&n| !(n > 0.0)) {
            return Err(Error::InvalidInput("path-loss exponents must be positive".into()));
        }
        if !(self.shadowing_sigma_db >= 0.0) || !(self.correlation_m >= 0.0) {
            return Err(Error::InvalidInput(
                "shadowing sigma and correlation distance must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadSpec {
    pub id: String,
    pub polyline: Vec<Position2D>,
}

impl RoadSpec {
    pub fn new(id: &str, points: &[(f64, f64)]) -> Self {
        Self {
            id: id.to_string(),
            polyline: points.iter().map(|&(x, y)| Position2D::new(x, y)).collect(),
        }
    }

    pub fn length(&self) -> f64 {
        self.polyline.windows(2).map(|w| w[0].distance(&w[1])).sum()
    }

    /// Points every `interval` meters from the start; the last one lies within
    /// one interval of the end.
    pub fn sample(&self, interval: f64) -> Vec<Position2D> {
        let total = self.length();
        let count = (total / interval + 1e-9).floor() as usize + 1;
        let mut out = Vec::with_capacity(count);
        let mut seg = 0;
        let mut seg_start = 0.0;
        for i in 0..count {
            let s = i as f64 * interval;
            while seg + 2 < self.polyline.len()
                && seg_start + self.polyline[seg].distance(&self.polyline[seg + 1]) < s
            {
                seg_start += self.polyline[seg].distance(&self.polyline[seg + 1]);
                seg += 1;
            }
            let a = self.polyline[seg];
            let b = self.polyline[seg + 1];
            let len = a.distance(&b);
            out.push(a.lerp(&b, ((s - seg_start) / len).min(1.0)));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutSpec {
    pub bounds: Bounds,
    pub roads: Vec<RoadSpec>,
    /// Macro cell first.
    pub bs_positions: Vec<Position2D>,
    pub sampling_interval: f64,
    /// Vehicle speed; only used to timestamp samples.
    pub speed_kmh: f64,
}

impl Default for LayoutSpec {
    /// Four separate roads around a central block in a 600 m x 600 m area,
    /// one macro cell and five small cells.
    fn default() -> Self {
        Self {
            bounds: Bounds {
                min: Position2D::new(0.0, 0.0),
                max: Position2D::new(600.0, 600.0),
            },
            roads: vec![
                RoadSpec::new("south", &[(60.0, 100.0), (540.0, 100.0)]),
                RoadSpec::new("east", &[(560.0, 140.0), (560.0, 300.0), (520.0, 480.0)]),
                RoadSpec::new("north", &[(480.0, 520.0), (300.0, 540.0), (100.0, 500.0)]),
                RoadSpec::new("west", &[(40.0, 460.0), (70.0, 300.0), (40.0, 140.0)]),
            ],
            bs_positions: vec![
                Position2D::new(300.0, 300.0),
                Position2D::new(200.0, 130.0),
                Position2D::new(530.0, 230.0),
                Position2D::new(380.0, 500.0),
                Position2D::new(100.0, 380.0),
                Position2D::new(450.0, 160.0),
            ],
            sampling_interval: 1.0,
            speed_kmh: 30.0,
        }
    }
}

impl LayoutSpec {
    fn validate(&self) -> Result<()> {
        if self.bs_positions.is_empty() {
            return Err(Error::InvalidInput("layout has no base stations".into()));
        }
        if !(self.sampling_interval > 0.0) {
            return Err(Error::InvalidInput("sampling interval must be positive".into()));
        }
        for road in &self.roads {
            if road.polyline.len() < 2 {
                return Err(Error::InvalidInput(format!("road {} needs two vertices", road.id)));
            }
            if let Some(p) = road.polyline.iter().find(|p| !self.bounds.contains(p)) {
                return Err(Error::InvalidInput(format!(
                    "road {} vertex ({}, {}) lies outside the area",
                    road.id, p.x, p.y
                )));
            }
            if road.polyline.windows(2).any(|w| w[0].distance(&w[1]) <= 0.0) {
                return Err(Error::InvalidInput(format!("road {} has repeated vertices", road.id)));
            }
        }
        Ok(())
    }

    /// Same layout with only the first `k` base stations.
    pub fn with_bs_count(&self, k: usize) -> LayoutSpec {
        LayoutSpec {
            bs_positions: self.bs_positions.iter().take(k).copied().collect(),
            ..self.clone()
        }
    }
}

/// Spatially correlated log-normal shadowing of one base station.
#[derive(Debug, Clone)]
struct ShadowField {
    sigma: f64,
    /// Wave vector and phase per component.
    components: Vec<(f64, f64, f64)>,
    /// Independent draws when correlation is disabled.
    iid_seed: Option<u64>,
}

impl ShadowField {
    fn new(params: &ChannelParams, bs: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(bs as u64 + 1);
        if params.shadowing_sigma_db == 0.0 {
            return Self {
                sigma: 0.0,
                components: Vec::new(),
                iid_seed: None,
            };
        }
        if params.correlation_m == 0.0 {
            return Self {
                sigma: params.shadowing_sigma_db,
                components: Vec::new(),
                iid_seed: Some(rng.gen()),
            };
        }
        let components = (0..SHADOW_COMPONENTS)
            .map(|_| {
                let zx: f64 = StandardNormal.sample(&mut rng);
                let zy: f64 = StandardNormal.sample(&mut rng);
                let w: f64 = StandardNormal.sample(&mut rng);
                let scale = 1.0 / (w.abs().max(1e-12) * params.correlation_m);
                let phase = rng.gen_range(0.0..std::f64::consts::TAU);
                (zx * scale, zy * scale, phase)
            })
            .collect();
        Self {
            sigma: params.shadowing_sigma_db,
            components,
            iid_seed: None,
        }
    }

    fn at(&self, p: &Position2D) -> f64 {
        if self.sigma == 0.0 {
            return 0.0;
        }
        if let Some(seed) = self.iid_seed {
            let mut rng = ChaCha8Rng::seed_from_u64(
                seed ^ p.x.to_bits().rotate_left(17) ^ p.y.to_bits().rotate_left(41),
            );
            let z: f64 = StandardNormal.sample(&mut rng);
            return self.sigma * z;
        }
        let amp = self.sigma * (2.0 / self.components.len() as f64).sqrt();
        amp * self
            .components
            .iter()
            .map(|&(wx, wy, ph)| (wx * p.x + wy * p.y + ph).cos())
            .sum::<f64>()
    }
}

/// Path loss plus shadowing for every base station of a layout.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    bs_positions: Vec<Position2D>,
    params: ChannelParams,
    /// Weighted shadowing fields summed per base station.
    shadow: Vec<Vec<(f64, ShadowField)>>,
}

impl ChannelModel {
    pub fn new(bs_positions: &[Position2D], params: &ChannelParams) -> Result<Self> {
        params.validate(bs_positions.len())?;
        Ok(Self {
            bs_positions: bs_positions.to_vec(),
            params: params.clone(),
            shadow: (0..bs_positions.len())
                .map(|k| vec![(1.0, ShadowField::new(params, k))])
                .collect(),
        })
    }

    /// Shadowing `rho * S + sqrt(1 - rho^2) * S'` where `S` is the field of
    /// `params` and `S'` an independent field drawn from `fresh_seed`. The
    /// marginal spread and correlation distance are unchanged.
    pub fn repeated(
        bs_positions: &[Position2D],
        params: &ChannelParams,
        fresh_seed: u64,
        rho: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::InvalidInput(format!("shadowing correlation {rho} outside [0, 1]")));
        }
        let fresh = ChannelParams {
            seed: fresh_seed,
            ..params.clone()
        };
        let mut model = Self::new(bs_positions, params)?;
        for (k, fields) in model.shadow.iter_mut().enumerate() {
            fields[0].0 = rho;
            fields.push(((1.0 - rho * rho).sqrt(), ShadowField::new(&fresh, k)));
        }
        Ok(model)
    }

    /// Received power from base station `bs` at `pos` (dBm), floored at
    /// [`FLOOR_DBM`].
    pub fn rsrp_at(&self, pos: &Position2D, bs: usize) -> f64 {
        let d = pos.distance(&self.bs_positions[bs]);
        let d = if d > 0.0 { d } else { GUARD_DISTANCE };
        let path_loss = self.params.pl0_db
            + 10.0 * self.params.exponent[bs] * (d / REFERENCE_DISTANCE).log10();
        let shadow: f64 = self.shadow[bs].iter().map(|(w, f)| w * f.at(pos)).sum();
        (self.params.tx_power_dbm[bs] - path_loss - shadow).max(FLOOR_DBM)
    }

    pub fn signal_at(&self, pos: &Position2D) -> SignalVector {
        let readings = (0..self.bs_positions.len())
            .map(|k| self.rsrp_at(pos, k).min(CEILING_DBM))
            .collect();
        SignalVector::new(readings).expect("readings are clamped into range")
    }
}

/// Single-reading convenience over [`ChannelModel::rsrp_at`].
pub fn rsrp_at(pos: &Position2D, bs: usize, bs_positions: &[Position2D], params: &ChannelParams) -> Result<f64> {
    if bs >= bs_positions.len() {
        return Err(Error::InvalidInput(format!("no base station {bs}")));
    }
    Ok(ChannelModel::new(bs_positions, params)?.rsrp_at(pos, bs))
}

/// Drives every road of the layout once and records the readings.
pub fn generate(layout: &LayoutSpec, params: &ChannelParams) -> Result<Scenario> {
    layout.validate()?;
    generate_with(layout, &ChannelModel::new(&layout.bs_positions, params)?)
}

/// Drives the layout again through a channel whose shadowing keeps
/// correlation `rho` with the one of `params`.
pub fn generate_repeat(layout: &LayoutSpec, params: &ChannelParams, fresh_seed: u64, rho: f64) -> Result<Scenario> {
    layout.validate()?;
    generate_with(
        layout,
        &ChannelModel::repeated(&layout.bs_positions, params, fresh_seed, rho)?,
    )
}

fn generate_with(layout: &LayoutSpec, model: &ChannelModel) -> Result<Scenario> {
    let roads = layout
        .roads
        .iter()
        .map(|road| {
            let positions = road.sample(layout.sampling_interval);
            let signals = positions.iter().map(|p| model.signal_at(p)).collect();
            SignalSequence::new(road.id.clone(), positions, signals)
        })
        .collect::<Result<Vec<_>>>()?;
    Scenario::new(
        layout.bs_positions.clone(),
        roads,
        Some(ScenarioMeta {
            sampling_interval: layout.sampling_interval,
            bounds: layout.bounds,
        }),
    )
}
