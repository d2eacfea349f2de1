//! Online query files: windows of readings with odometry spacing and no
//! positions.
//!
//! `queries.csv` has the header `window_id,idx,spacing,rsrp_0..rsrp_{K-1}`;
//! rows of one window are contiguous and `spacing` is the distance travelled
//! since the previous row (0 on a window's first row). `queries_truth.csv`
//! has `window_id,road_id,idx,x,y` for each window's latest reading.

use std::fmt::Write as _;

use anyhow::{bail, Context, Result};
use roadloc::localizer::SignalBuffer;
use roadloc::{Scenario, SignalSequence, SignalVector};

pub struct QueryWindow {
    pub id: String,
    pub readings: Vec<(SignalVector, f64)>,
}

impl QueryWindow {
    pub fn sequence(&self) -> Result<SignalSequence> {
        let mut buffer = SignalBuffer::new(self.readings.len());
        for (o, spacing) in &self.readings {
            buffer.push(o.clone(), *spacing);
        }
        Ok(buffer.extract_window(self.readings.len())?)
    }
}

/// Windows of `window` samples ending every `stride` samples along each road.
pub fn write_queries(drive: &Scenario, window: usize, stride: usize) -> Result<(String, String)> {
    if window < 2 {
        bail!("query windows need at least two samples");
    }
    let mut queries = String::from("window_id,idx,spacing");
    for k in 0..drive.bs_count() {
        let _ = write!(queries, ",rsrp_{k}");
    }
    queries.push('\n');
    let mut truth = String::from("window_id,road_id,idx,x,y\n");
    for road in drive.roads() {
        let mut end = window - 1;
        while end < road.len() {
            let id = format!("{}-{end}", road.road_id());
            for (i, j) in (end + 1 - window..=end).enumerate() {
                let spacing = if i == 0 {
                    0.0
                } else {
                    road.positions()[j].distance(&road.positions()[j - 1])
                };
                let _ = write!(queries, "{id},{i},{spacing:.6}");
                for v in road.signals()[j].as_slice() {
                    let _ = write!(queries, ",{v:.6}");
                }
                queries.push('\n');
            }
            let p = road.positions()[end];
            let _ = writeln!(truth, "{id},{},{end},{:.6},{:.6}", road.road_id(), p.x, p.y);
            end += stride.max(1);
        }
    }
    Ok((queries, truth))
}

pub fn parse_queries(text: &str) -> Result<Vec<QueryWindow>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().context("reading query header")?.clone();
    let names: Vec<&str> = headers.iter().collect();
    if names.len() < 4 || names[..3] != ["window_id", "idx", "spacing"] {
        bail!("query header must start with window_id,idx,spacing followed by rsrp_0..rsrp_{{K-1}}");
    }
    for (k, name) in names[3..].iter().enumerate() {
        if *name != format!("rsrp_{k}") {
            bail!("query header: expected rsrp_{k}, found {name:?}");
        }
    }
    let mut windows: Vec<QueryWindow> = Vec::new();
    for record in reader.records() {
        let record = record.context("reading query row")?;
        let line = record.position().map_or(0, |p| p.line());
        let num = |c: usize| -> Result<f64> {
            record[c]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .with_context(|| format!("line {line}: {} value {:?} is not a number", names[c], &record[c]))
        };
        let spacing = num(2)?;
        if spacing < 0.0 {
            bail!("line {line}: spacing must be non-negative");
        }
        let rsrp = (3..names.len()).map(num).collect::<Result<Vec<_>>>()?;
        let o = SignalVector::clamped(rsrp).with_context(|| format!("line {line}"))?;
        match windows.last_mut() {
            Some(w) if w.id == record[0] => w.readings.push((o, spacing)),
            _ => {
                if windows.iter().any(|w| w.id == record[0]) {
                    bail!("line {line}: rows of window {:?} are not contiguous", &record[0]);
                }
                windows.push(QueryWindow {
                    id: record[0].to_string(),
                    readings: vec![(o, spacing)],
                });
            }
        }
    }
    if windows.is_empty() {
        bail!("query file holds no windows");
    }
    Ok(windows)
}

pub struct Truth {
    pub window_id: String,
    pub road_id: String,
    pub x: f64,
    pub y: f64,
}

pub fn parse_truth(text: &str) -> Result<Vec<Truth>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.context("reading truth row")?;
        if record.len() != 5 {
            bail!("truth rows need window_id,road_id,idx,x,y");
        }
        out.push(Truth {
            window_id: record[0].to_string(),
            road_id: record[1].to_string(),
            x: record[3].parse().context("truth x")?,
            y: record[4].parse().context("truth y")?,
        });
    }
    Ok(out)
}
