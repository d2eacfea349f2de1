//! Browser demo: simulate the road network, build the radio map, and
//! localize a held-out reading picked on the canvas.
//!
//! [`Session`] carries the logic and returns JSON strings so it can be tested
//! natively; [`Demo`] is its JavaScript face.

use roadloc::config::Config;
use roadloc::localizer::{build_map, localize_window, RadioMap};
use roadloc::synth::{generate, generate_repeat};
use roadloc::{Position2D, Scenario};
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

pub struct Session {
    config: Config,
    train: Scenario,
    drive: Scenario,
    map: Option<RadioMap>,
}

fn xy(p: &Position2D) -> [f64; 2] {
    [p.x, p.y]
}

#[derive(Serialize)]
struct RoadView<'a> {
    id: &'a str,
    points: Vec<[f64; 2]>,
}

impl Session {
    /// `settings` uses the CLI's flat TOML keys.
    pub fn generate(settings: &str) -> Result<Session, String> {
        let config = Config::from_toml(settings, &[]).map_err(|e| e.to_string())?;
        let exp = config.experiment().map_err(|e| e.to_string())?;
        let train = generate(&exp.layout, &exp.channel).map_err(|e| e.to_string())?;
        let drive = generate_repeat(&exp.layout, &exp.channel, config.heldout_seed, config.heldout_rho)
            .map_err(|e| e.to_string())?;
        Ok(Session {
            config,
            train,
            drive,
            map: None,
        })
    }

    /// Roads, base stations and bounds of the generated scenario.
    pub fn scenario_json(&self) -> String {
        let roads: Vec<RoadView> = self
            .train
            .roads()
            .iter()
            .map(|r| RoadView {
                id: r.road_id(),
                points: r.positions().iter().map(xy).collect(),
            })
            .collect();
        let b = self.train.meta().bounds;
        json!({
            "roads": roads,
            "bs": self.train.bs_positions().iter().map(xy).collect::<Vec<_>>(),
            "bounds": [xy(&b.min), xy(&b.max)],
        })
        .to_string()
    }

    /// Builds the map and returns each road's sub-segment ranges and masks.
    pub fn segment(&mut self) -> Result<String, String> {
        let map = build_map(&self.train, &self.config.map_config()).map_err(|e| e.to_string())?;
        let k = map.bs_count;
        let roads: Vec<_> = map
            .roads
            .iter()
            .map(|r| {
                json!({
                    "id": r.road_id,
                    "subsegments": r.subsegments.iter().map(|s| json!({
                        "start": s.info.start,
                        "end": s.info.end,
                        "midpoint": xy(&s.info.midpoint),
                        "mask": s.mask.selected().iter()
                            .map(|&i| roadloc::features::feature_label(i, k))
                            .collect::<Vec<_>>(),
                    })).collect::<Vec<_>>(),
                })
            })
            .collect();
        let out = json!({ "window": map.window, "roads": roads }).to_string();
        self.map = Some(map);
        Ok(out)
    }

    /// Localizes the held-out reading `idx` of road `road` from the window
    /// of readings ending there.
    pub fn localize(&self, road: usize, idx: usize) -> Result<String, String> {
        let map = self.map.as_ref().ok_or("build the map first")?;
        let seq = self
            .drive
            .roads()
            .get(road)
            .ok_or_else(|| format!("no road {road}"))?;
        if idx >= seq.len() {
            return Err(format!("road {} has {} samples", seq.road_id(), seq.len()));
        }
        let end = idx.max(1);
        let start = (end + 1).saturating_sub(map.window);
        let window = seq.slice(start, end).map_err(|e| e.to_string())?;
        let r = localize_window(&window, map).map_err(|e| e.to_string())?;
        let truth = seq.positions()[idx];
        Ok(json!({
            "road_id": r.road_id,
            "true_road_id": seq.road_id(),
            "subsegment": r.subsegment,
            "posterior": r.posterior,
            "estimate": xy(&r.position),
            "truth": xy(&truth),
            "error_m": r.position.distance(&truth),
            "window": seq.positions()[start..=end].iter().map(xy).collect::<Vec<_>>(),
            "comparisons": r.work.comparisons(),
        })
        .to_string())
    }

    /// Nearest held-out sample to a clicked point, as `[road, idx]`.
    pub fn nearest_sample(&self, x: f64, y: f64) -> Result<String, String> {
        let click = Position2D::new(x, y);
        let mut best = (f64::INFINITY, 0, 0);
        for (r, seq) in self.drive.roads().iter().enumerate() {
            for (j, p) in seq.positions().iter().enumerate() {
                let d = p.distance(&click);
                if d < best.0 {
                    best = (d, r, j);
                }
            }
        }
        if best.0.is_infinite() {
            return Err("scenario has no samples".into());
        }
        Ok(json!([best.1, best.2]).to_string())
    }
}

#[wasm_bindgen]
pub struct Demo(Session);

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(settings: &str) -> Result<Demo, JsError> {
        Session::generate(settings).map(Demo).map_err(|e| JsError::new(&e))
    }

    pub fn scenario(&self) -> String {
        self.0.scenario_json()
    }

    pub fn segment(&mut self) -> Result<String, JsError> {
        self.0.segment().map_err(|e| JsError::new(&e))
    }

    pub fn localize(&self, road: usize, idx: usize) -> Result<String, JsError> {
        self.0.localize(road, idx).map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen(js_name = nearestSample)]
    pub fn nearest_sample(&self, x: f64, y: f64) -> Result<String, JsError> {
        self.0.nearest_sample(x, y).map_err(|e| JsError::new(&e))
    }
}
