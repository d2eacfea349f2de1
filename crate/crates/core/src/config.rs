//! Flat TOML configuration shared by the CLI and the benchmark.
//!
//! Every key is optional. Unknown keys are rejected. `key=value` overrides
//! are parsed as TOML values, falling back to a bare string.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::bench::{BenchConfig, Experiment};
use crate::error::{Error, Result};
use crate::localizer::{DistanceUnits, MapConfig, PriorMode, RoadReference};
use crate::synth::{ChannelParams, LayoutSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    // scenario
    pub seed: u64,
    /// JSON layout file; the built-in layout when absent.
    pub layout_file: Option<PathBuf>,
    pub bs_count: Option<usize>,
    pub sampling_interval: f64,
    pub speed_kmh: f64,

    // channel
    pub mbs_tx_dbm: f64,
    pub sbs_tx_dbm: f64,
    pub mbs_exponent: f64,
    pub sbs_exponent: f64,
    pub pl0_db: f64,
    pub shadowing_sigma_db: f64,
    pub correlation_m: f64,

    // map
    pub l_min: usize,
    /// 0 disables the cap.
    pub l_max: usize,
    /// Defaults to 0.25 per base station.
    pub pen: Option<f64>,
    pub f_max: usize,
    pub rsrp_bin: f64,
    pub gradient_bin: f64,
    pub degree: usize,
    /// Online window in samples; 0 uses the map's median sub-segment size.
    pub window: usize,
    pub priors: PriorMode,
    pub road_reference: RoadReference,
    pub distance_units: DistanceUnits,

    // evaluation
    pub heldout_seed: u64,
    pub heldout_rho: f64,
    pub trials: usize,
    pub grid_size: f64,
    pub grid_sizes: Vec<f64>,
    /// Empty sweeps 1..=K.
    pub bs_counts: Vec<usize>,
    pub rwknn_k: usize,
    pub cfels_degree: usize,
    pub cfels_step: f64,
    pub timing_repeats: usize,
    /// Samples per query window written by `generate`; 0 uses `l_max`.
    pub query_window: usize,
}

impl Default for Config {
    fn default() -> Self {
        let layout = LayoutSpec::default();
        let channel = ChannelParams::hetnet(layout.bs_positions.len(), 1);
        let map = MapConfig::default();
        let bench = BenchConfig::default();
        Self {
            seed: channel.seed,
            layout_file: None,
            bs_count: None,
            sampling_interval: layout.sampling_interval,
            speed_kmh: layout.speed_kmh,
            mbs_tx_dbm: channel.tx_power_dbm[0],
            sbs_tx_dbm: channel.tx_power_dbm[1],
            mbs_exponent: channel.exponent[0],
            sbs_exponent: channel.exponent[1],
            pl0_db: channel.pl0_db,
            shadowing_sigma_db: channel.shadowing_sigma_db,
            correlation_m: channel.correlation_m,
            l_min: map.l_min,
            l_max: map.l_max.unwrap_or(0),
            pen: map.pen,
            f_max: map.f_max,
            rsrp_bin: map.rsrp_bin,
            gradient_bin: map.gradient_bin,
            degree: map.degree,
            window: map.window.unwrap_or(0),
            priors: map.priors,
            road_reference: map.road_reference,
            distance_units: map.distance_units,
            heldout_seed: bench.heldout_seed,
            heldout_rho: bench.heldout_rho,
            trials: bench.trials,
            grid_size: bench.grid_size,
            grid_sizes: vec![2.0, 4.0, 6.0, 8.0, 10.0],
            bs_counts: Vec::new(),
            rwknn_k: bench.rwknn_k,
            cfels_degree: bench.cfels_degree,
            cfels_step: bench.cfels_step,
            timing_repeats: bench.timing_repeats,
            query_window: 0,
        }
    }
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

impl Config {
    /// Parses `text` and applies `overrides` (`key=value`) on top.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            table.insert(key.trim().to_string(), parse_value(raw.trim()));
        }
        let config: Config = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: Option<&std::path::Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("reading {}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.map_config().validate()?;
        let positive = [
            ("sampling_interval", self.sampling_interval),
            ("speed_kmh", self.speed_kmh),
            ("grid_size", self.grid_size),
            ("cfels_step", self.cfels_step),
        ];
        for (k, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{k} must be positive, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.heldout_rho) {
            return Err(Error::Config(format!("heldout_rho must lie in [0, 1], got {}", self.heldout_rho)));
        }
        if self.grid_sizes.iter().any(|g| !(*g > 0.0)) {
            return Err(Error::Config("grid_sizes must be positive".into()));
        }
        if self.shadowing_sigma_db < 0.0 || self.correlation_m < 0.0 {
            return Err(Error::Config("shadowing sigma and correlation must be non-negative".into()));
        }
        if self.trials == 0 || self.rwknn_k == 0 {
            return Err(Error::Config("trials and rwknn_k must be at least 1".into()));
        }
        if self.bs_count == Some(0) {
            return Err(Error::Config("bs_count must be at least 1".into()));
        }
        Ok(())
    }

    pub fn map_config(&self) -> MapConfig {
        MapConfig {
            l_min: self.l_min,
            l_max: (self.l_max > 0).then_some(self.l_max),
            pen: self.pen,
            f_max: self.f_max,
            rsrp_bin: self.rsrp_bin,
            gradient_bin: self.gradient_bin,
            degree: self.degree,
            window: (self.window > 0).then_some(self.window),
            priors: self.priors,
            road_reference: self.road_reference,
            distance_units: self.distance_units,
        }
    }

    pub fn layout(&self) -> Result<LayoutSpec> {
        let base = match &self.layout_file {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("reading {}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("layout {}: {e}", p.display())))?
            }
            None => LayoutSpec::default(),
        };
        let mut layout = match self.bs_count {
            Some(k) if k > base.bs_positions.len() => {
                return Err(Error::Config(format!(
                    "bs_count {k} exceeds the layout's {} base stations",
                    base.bs_positions.len()
                )))
            }
            Some(k) => base.with_bs_count(k),
            None => base,
        };
        layout.sampling_interval = self.sampling_interval;
        layout.speed_kmh = self.speed_kmh;
        Ok(layout)
    }

    /// Per-BS parameters; base station 0 is the macro cell.
    pub fn channel(&self, bs_count: usize) -> ChannelParams {
        let pick = |m: f64, s: f64| (0..bs_count).map(|b| if b == 0 { m } else { s }).collect();
        ChannelParams {
            tx_power_dbm: pick(self.mbs_tx_dbm, self.sbs_tx_dbm),
            exponent: pick(self.mbs_exponent, self.sbs_exponent),
            pl0_db: self.pl0_db,
            shadowing_sigma_db: self.shadowing_sigma_db,
            correlation_m: self.correlation_m,
            seed: self.seed,
        }
    }

    pub fn bench_config(&self) -> BenchConfig {
        BenchConfig {
            map: self.map_config(),
            heldout_seed: self.heldout_seed,
            heldout_rho: self.heldout_rho,
            trials: self.trials,
            grid_size: self.grid_size,
            rwknn_k: self.rwknn_k,
            cfels_degree: self.cfels_degree,
            cfels_step: self.cfels_step,
            timing_repeats: self.timing_repeats,
        }
    }

    pub fn experiment(&self) -> Result<Experiment> {
        let layout = self.layout()?;
        let channel = self.channel(layout.bs_positions.len());
        Ok(Experiment {
            layout,
            channel,
            bench: self.bench_config(),
        })
    }

    pub fn bs_sweep(&self, k: usize) -> Vec<usize> {
        if self.bs_counts.is_empty() {
            (1..=k).collect()
        } else {
            self.bs_counts.clone()
        }
    }

    pub fn query_window(&self) -> usize {
        match (self.query_window, self.l_max) {
            (0, 0) => 3 * self.l_min,
            (0, m) => m,
            (w, _) => w,
        }
    }
}
