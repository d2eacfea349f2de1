//! Accuracy and latency sweeps of the proposed method against the baselines
//! over base-station count and fingerprint grid size.
//!
//! Every sweep point localizes a held-out drive over the training geometry.
//! The drive is cut at the map's singular points; each piece is one online
//! window, and every sample in it is one query.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{cfels_locate, gift_locate, rwknn_locate, CurveSearchModel, GridFingerprintDB};
use crate::error::{Error, Result};
use crate::features::feature_set;
use crate::localizer::{build_map, localize, MapConfig, RadioMap};
use crate::signal::Scenario;
use crate::synth::{generate, generate_repeat, ChannelParams, LayoutSpec};

/// Bound factor on proposed-method comparisons relative to `N_r + N_s + K`.
pub const COMPLEXITY_FACTOR: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "proposed")]
    Proposed,
    #[serde(rename = "rwknn")]
    Rwknn,
    #[serde(rename = "gift")]
    Gift,
    #[serde(rename = "cf-els")]
    CfEls,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Proposed, Method::Rwknn, Method::Gift, Method::CfEls];

    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Rwknn => "rwknn",
            Method::Gift => "gift",
            Method::CfEls => "cf-els",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub map: MapConfig,
    /// Seed of each held-out drive's fresh shadowing is `heldout_seed + trial`.
    pub heldout_seed: u64,
    /// Correlation between training and held-out shadowing.
    pub heldout_rho: f64,
    pub trials: usize,
    /// Grid size of the base-station sweep (m).
    pub grid_size: f64,
    pub rwknn_k: usize,
    pub cfels_degree: usize,
    pub cfels_step: f64,
    /// Timed repetitions per query after one untimed run.
    pub timing_repeats: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            map: MapConfig::default(),
            heldout_seed: 1_000_003,
            heldout_rho: 0.9,
            trials: 1,
            grid_size: 2.0,
            rwknn_k: 3,
            cfels_degree: 5,
            cfels_step: 0.1,
            timing_repeats: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "values")]
pub enum Sweep {
    BsCount(Vec<usize>),
    GridSize(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    BsCount,
    GridSize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapStats {
    pub n_r: usize,
    /// Largest per-road sub-segment feature count.
    pub n_s_max: usize,
    pub subsegments: usize,
    pub window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    pub mde: f64,
    pub mean_delay_ms: f64,
    /// Delay including feature extraction of the query window; equal to
    /// `mean_delay_ms` for methods without a window stage.
    pub mean_delay_with_extraction_ms: f64,
    pub mean_comparisons: f64,
    pub max_comparisons: usize,
    /// Largest ratio of comparisons to `N_r + N_s(i*) + K`; proposed only.
    pub max_complexity_ratio: Option<f64>,
    pub errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub kind: SweepKind,
    pub bs_count: usize,
    pub grid_size: f64,
    pub map: MapStats,
    pub results: Vec<MethodResult>,
}

impl SweepPoint {
    pub fn result(&self, method: Method) -> Option<&MethodResult> {
        self.results.iter().find(|r| r.method == method)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: BenchConfig,
    pub channel: ChannelParams,
    pub environment: String,
    pub points: Vec<SweepPoint>,
}

/// Layout, channel and bench settings of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub layout: LayoutSpec,
    pub channel: ChannelParams,
    pub bench: BenchConfig,
}

struct Prepared {
    train: Scenario,
    heldout: Vec<Scenario>,
    map: Option<RadioMap>,
    curves: Option<CurveSearchModel>,
}

fn prepare(exp: &Experiment, train: &Scenario, heldout: &[Scenario], bs: usize, methods: &[Method]) -> Result<Prepared> {
    let train = train.with_bs_count(bs)?;
    let heldout = heldout
        .iter()
        .map(|h| h.with_bs_count(bs))
        .collect::<Result<Vec<_>>>()?;
    let map = if methods.contains(&Method::Proposed) {
        Some(build_map(&train, &exp.bench.map)?)
    } else {
        None
    };
    let curves = if methods.contains(&Method::CfEls) {
        Some(CurveSearchModel::fit(&train, exp.bench.cfels_degree, exp.bench.cfels_step)?)
    } else {
        None
    };
    Ok(Prepared {
        train,
        heldout,
        map,
        curves,
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Runs `f` once untimed, then `repeats` times; returns the first output and
/// the median duration in ms.
fn timed<T>(repeats: usize, mut f: impl FnMut() -> Result<T>) -> Result<(T, f64)> {
    let out = f()?;
    let mut times = Vec::with_capacity(repeats.max(1));
    for _ in 0..repeats.max(1) {
        let start = std::time::Instant::now();
        std::hint::black_box(f()?);
        times.push(start.elapsed().as_secs_f64() * 1e3);
    }
    Ok((out, median(times)))
}

#[derive(Default)]
struct Tally {
    errors: Vec<f64>,
    delays: Vec<f64>,
    extraction: Vec<f64>,
    comparisons: Vec<usize>,
    ratio: Option<f64>,
}

impl Tally {
    fn finish(self, method: Method) -> MethodResult {
        let n = self.errors.len().max(1) as f64;
        let mean_delay = self.delays.iter().sum::<f64>() / n;
        let extraction = self.extraction.iter().sum::<f64>() / n;
        MethodResult {
            method,
            mde: self.errors.iter().sum::<f64>() / n,
            mean_delay_ms: mean_delay,
            mean_delay_with_extraction_ms: mean_delay + extraction,
            mean_comparisons: self.comparisons.iter().sum::<usize>() as f64 / n,
            max_comparisons: self.comparisons.iter().copied().max().unwrap_or(0),
            max_complexity_ratio: self.ratio,
            errors: self.errors,
        }
    }
}

fn run_proposed(map: &RadioMap, heldout: &[Scenario], repeats: usize) -> Result<MethodResult> {
    let mut t = Tally::default();
    let mut worst = 0.0f64;
    for drive in heldout {
        for (road, entry) in drive.roads().iter().zip(&map.roads) {
            if road.road_id() != entry.road_id {
                return Err(Error::InvalidInput(format!(
                    "held-out road {} does not line up with map road {}",
                    road.road_id(),
                    entry.road_id
                )));
            }
            let last = entry.subsegments.len() - 1;
            for s in &entry.subsegments {
                let piece = road.slice(s.info.start, s.info.end)?;
                let (e_u, extract_ms) = timed(repeats, || Ok(feature_set(&piece)))?;
                // A shared boundary sample is a query of the piece it starts.
                let end = if s.info.index == last { s.info.end } else { s.info.end - 1 };
                let n = end - s.info.start + 1;
                for j in s.info.start..=end {
                    let o = &road.signals()[j];
                    let (res, ms) = timed(repeats, || localize(&e_u, o, map))?;
                    let bound = map.n_r() + map.roads[res.road_index].n_s() + map.bs_count;
                    worst = worst.max(res.work.comparisons() as f64 / bound as f64);
                    t.errors.push(res.position.distance(&road.positions()[j]));
                    t.delays.push(ms);
                    t.extraction.push(extract_ms / n as f64);
                    t.comparisons.push(res.work.comparisons());
                }
            }
        }
    }
    t.ratio = Some(worst);
    Ok(t.finish(Method::Proposed))
}

fn run_sample_baseline(
    method: Method,
    heldout: &[Scenario],
    repeats: usize,
    mut locate: impl FnMut(&Scenario, usize, usize) -> Result<crate::baselines::BaselineEstimate>,
) -> Result<MethodResult> {
    let mut t = Tally::default();
    for drive in heldout {
        for (r, road) in drive.roads().iter().enumerate() {
            for j in 0..road.len() {
                let (est, ms) = timed(repeats, || locate(drive, r, j))?;
                t.errors.push(est.position.distance(&road.positions()[j]));
                t.delays.push(ms);
                t.extraction.push(0.0);
                t.comparisons.push(est.comparisons);
            }
        }
    }
    Ok(t.finish(method))
}

fn run_point(
    exp: &Experiment,
    prepared: &Prepared,
    methods: &[Method],
    grid_size: f64,
    cached: &mut Vec<MethodResult>,
) -> Result<Vec<MethodResult>> {
    let cfg = &exp.bench;
    let needs_db = methods.iter().any(|m| matches!(m, Method::Rwknn | Method::Gift));
    let db = if needs_db {
        Some(GridFingerprintDB::build(&prepared.train, grid_size, cfg.map.l_min)?)
    } else {
        None
    };
    let mut out = Vec::with_capacity(methods.len());
    for &method in methods {
        if let Some(hit) = cached.iter().find(|r| r.method == method) {
            out.push(hit.clone());
            continue;
        }
        let result = match method {
            Method::Proposed => {
                let map = prepared.map.as_ref().expect("map built for proposed");
                let r = run_proposed(map, &prepared.heldout, cfg.timing_repeats)?;
                cached.push(r.clone());
                r
            }
            Method::CfEls => {
                let model = prepared.curves.as_ref().expect("curves fitted for cf-els");
                let r = run_sample_baseline(method, &prepared.heldout, cfg.timing_repeats, |d, r, j| {
                    Ok(cfels_locate(model, &d.roads()[r].signals()[j])?.estimate)
                })?;
                cached.push(r.clone());
                r
            }
            Method::Rwknn => {
                let db = db.as_ref().expect("grid built");
                run_sample_baseline(method, &prepared.heldout, cfg.timing_repeats, |d, r, j| {
                    rwknn_locate(db, &d.roads()[r].signals()[j], cfg.rwknn_k)
                })?
            }
            Method::Gift => {
                let db = db.as_ref().expect("grid built");
                run_sample_baseline(method, &prepared.heldout, cfg.timing_repeats, |d, r, j| {
                    let road = &d.roads()[r];
                    let window = road.slice(j.saturating_sub(db.gradient_window), j.max(1))?;
                    gift_locate(db, &window)
                })?
            }
        };
        out.push(result);
    }
    Ok(out)
}

fn map_stats(map: Option<&RadioMap>) -> MapStats {
    map.map_or(
        MapStats {
            n_r: 0,
            n_s_max: 0,
            subsegments: 0,
            window: 0,
        },
        |m| MapStats {
            n_r: m.n_r(),
            n_s_max: m.roads.iter().map(|r| r.n_s()).max().unwrap_or(0),
            subsegments: m.subsegment_count(),
            window: m.window,
        },
    )
}

/// Trains on one drive of the layout and localizes `trials` held-out drives
/// at every sweep point. Error values are deterministic for fixed seeds.
pub fn run_sweep(exp: &Experiment, methods: &[Method], sweep: &Sweep) -> Result<RunReport> {
    if methods.is_empty() {
        return Err(Error::Config("no methods to run".into()));
    }
    if exp.bench.trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    let k = exp.layout.bs_positions.len();
    let train = generate(&exp.layout, &exp.channel)?;
    let heldout = (0..exp.bench.trials)
        .map(|t| {
            generate_repeat(
                &exp.layout,
                &exp.channel,
                exp.bench.heldout_seed + t as u64,
                exp.bench.heldout_rho,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let mut points = Vec::new();
    match sweep {
        Sweep::BsCount(counts) => {
            for &b in counts {
                let ctx = |e: Error| e.context(format!("sweep point bs_count={b}"));
                if b == 0 || b > k {
                    return Err(ctx(Error::Config(format!("bs_count {b} outside 1..={k}"))));
                }
                let prepared = prepare(exp, &train, &heldout, b, methods).map_err(ctx)?;
                let results =
                    run_point(exp, &prepared, methods, exp.bench.grid_size, &mut Vec::new()).map_err(ctx)?;
                points.push(SweepPoint {
                    kind: SweepKind::BsCount,
                    bs_count: b,
                    grid_size: exp.bench.grid_size,
                    map: map_stats(prepared.map.as_ref()),
                    results,
                });
            }
        }
        Sweep::GridSize(sizes) => {
            let prepared = prepare(exp, &train, &heldout, k, methods)?;
            // Grid size does not affect the proposed method or CF-ELS.
            let mut cached = Vec::new();
            for &g in sizes {
                let results = run_point(exp, &prepared, methods, g, &mut cached)
                    .map_err(|e| e.context(format!("sweep point grid_size={g}")))?;
                points.push(SweepPoint {
                    kind: SweepKind::GridSize,
                    bs_count: k,
                    grid_size: g,
                    map: map_stats(prepared.map.as_ref()),
                    results,
                });
            }
        }
    }
    Ok(RunReport {
        config: exp.bench.clone(),
        channel: exp.channel.clone(),
        environment: format!(
            "{} {}; delays are wall-clock medians on this machine and are not comparable across hardware",
            std::env::consts::OS,
            std::env::consts::ARCH
        ),
        points,
    })
}

/// Both sweeps merged into one report.
pub fn run_all(exp: &Experiment, methods: &[Method], bs_counts: &[usize], grid_sizes: &[f64]) -> Result<RunReport> {
    let mut report = run_sweep(exp, methods, &Sweep::BsCount(bs_counts.to_vec()))?;
    report
        .points
        .extend(run_sweep(exp, methods, &Sweep::GridSize(grid_sizes.to_vec()))?.points);
    Ok(report)
}

/// Sorted `(error, cumulative fraction)` pairs; equal errors share the
/// largest fraction.
pub fn cdf(errors: &[f64]) -> Result<Vec<(f64, f64)>> {
    if errors.is_empty() {
        return Err(Error::InvalidInput("no errors to build a CDF from".into()));
    }
    if errors.iter().any(|e| e.is_nan()) {
        return Err(Error::InvalidInput("errors contain NaN".into()));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, e) in sorted.into_iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == e => last.1 = frac,
            _ => out.push((e, frac)),
        }
    }
    Ok(out)
}

/// The point reported in the CDF and delay table: the full base-station
/// count at the bench grid size, else the first point.
pub fn reference_point(report: &RunReport) -> Option<&SweepPoint> {
    let full = report.points.iter().map(|p| p.bs_count).max()?;
    report
        .points
        .iter()
        .find(|p| p.kind == SweepKind::BsCount && p.bs_count == full)
        .or_else(|| {
            report
                .points
                .iter()
                .find(|p| p.kind == SweepKind::GridSize && p.grid_size == report.config.grid_size)
        })
        .or_else(|| report.points.first())
}

fn sweep_csv(report: &RunReport, kind: SweepKind, delay: bool) -> String {
    let axis = match kind {
        SweepKind::BsCount => "bs_count",
        SweepKind::GridSize => "grid_size_m",
    };
    let mut out = if delay {
        format!("{axis},method,mean_delay_ms,mean_delay_with_extraction_ms\n")
    } else {
        format!("{axis},method,mde_m\n")
    };
    for p in report.points.iter().filter(|p| p.kind == kind) {
        let x = match kind {
            SweepKind::BsCount => p.bs_count.to_string(),
            SweepKind::GridSize => format!("{}", p.grid_size),
        };
        for r in &p.results {
            if delay {
                let _ = writeln!(
                    out,
                    "{x},{},{:.6},{:.6}",
                    r.method.name(),
                    r.mean_delay_ms,
                    r.mean_delay_with_extraction_ms
                );
            } else {
                let _ = writeln!(out, "{x},{},{:.6}", r.method.name(), r.mde);
            }
        }
    }
    out
}

/// Summary without the raw error samples.
#[derive(Serialize)]
struct Summary<'a> {
    config: &'a BenchConfig,
    channel: &'a ChannelParams,
    environment: &'a str,
    points: Vec<SummaryPoint<'a>>,
    checks: Vec<Check>,
}

#[derive(Serialize)]
struct SummaryPoint<'a> {
    kind: SweepKind,
    bs_count: usize,
    grid_size: f64,
    map: &'a MapStats,
    results: Vec<SummaryResult>,
}

#[derive(Serialize)]
struct SummaryResult {
    method: Method,
    mde: f64,
    mean_delay_ms: f64,
    mean_delay_with_extraction_ms: f64,
    mean_comparisons: f64,
    max_comparisons: usize,
    max_complexity_ratio: Option<f64>,
    queries: usize,
}

/// The CSV and JSON documents written by [`emit_plot_data`], by file name.
pub fn plot_documents(report: &RunReport) -> Result<Vec<(&'static str, String)>> {
    let reference = reference_point(report).ok_or_else(|| Error::InvalidInput("report has no points".into()))?;
    let mut fig5 = String::from("method,error_m,cumulative_fraction\n");
    let mut table = String::from("method,mean_delay_ms,mean_delay_with_extraction_ms,mean_comparisons,mde_m\n");
    for r in &reference.results {
        for (e, f) in cdf(&r.errors)? {
            let _ = writeln!(fig5, "{},{e:.6},{f:.6}", r.method.name());
        }
        let _ = writeln!(
            table,
            "{},{:.6},{:.6},{:.1},{:.6}",
            r.method.name(),
            r.mean_delay_ms,
            r.mean_delay_with_extraction_ms,
            r.mean_comparisons,
            r.mde
        );
    }
    let summary = Summary {
        config: &report.config,
        channel: &report.channel,
        environment: &report.environment,
        points: report
            .points
            .iter()
            .map(|p| SummaryPoint {
                kind: p.kind,
                bs_count: p.bs_count,
                grid_size: p.grid_size,
                map: &p.map,
                results: p
                    .results
                    .iter()
                    .map(|r| SummaryResult {
                        method: r.method,
                        mde: r.mde,
                        mean_delay_ms: r.mean_delay_ms,
                        mean_delay_with_extraction_ms: r.mean_delay_with_extraction_ms,
                        mean_comparisons: r.mean_comparisons,
                        max_comparisons: r.max_comparisons,
                        max_complexity_ratio: r.max_complexity_ratio,
                        queries: r.errors.len(),
                    })
                    .collect(),
            })
            .collect(),
        checks: checks(report),
    };
    Ok(vec![
        ("fig3a.csv", sweep_csv(report, SweepKind::BsCount, true)),
        ("fig3b.csv", sweep_csv(report, SweepKind::BsCount, false)),
        ("fig4a.csv", sweep_csv(report, SweepKind::GridSize, true)),
        ("fig4b.csv", sweep_csv(report, SweepKind::GridSize, false)),
        ("fig5.csv", fig5),
        ("table1.csv", table),
        (
            "summary.json",
            serde_json::to_string_pretty(&summary).expect("summaries serialize") + "\n",
        ),
    ])
}

/// Writes the figure CSVs and `summary.json` into `out_dir`.
pub fn emit_plot_data(report: &RunReport, out_dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Error::InvalidInput(format!("creating {}: {e}", out_dir.display())))?;
    plot_documents(report)?
        .into_iter()
        .map(|(name, text)| {
            let path = out_dir.join(name);
            std::fs::write(&path, text)
                .map_err(|e| Error::InvalidInput(format!("writing {}: {e}", path.display())))?;
            Ok(path)
        })
        .collect()
}

/// One asserted outcome of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Ordering and latency-structure assertions over a report holding both
/// sweeps with all four methods.
pub fn checks(report: &RunReport) -> Vec<Check> {
    let mut out = Vec::new();
    let grid_points: Vec<&SweepPoint> = report.points.iter().filter(|p| p.kind == SweepKind::GridSize).collect();
    let first = grid_points.iter().min_by(|a, b| a.grid_size.total_cmp(&b.grid_size));
    let last = grid_points.iter().max_by(|a, b| a.grid_size.total_cmp(&b.grid_size));

    if let (Some(first), Some(last)) = (first, last) {
        if let Some(p) = first.result(Method::Proposed) {
            let others: Vec<&MethodResult> = first.results.iter().filter(|r| r.method != Method::Proposed).collect();
            let passed = !others.is_empty() && others.iter().all(|r| p.mde < r.mde);
            let detail = first
                .results
                .iter()
                .map(|r| format!("{}={:.2} m", r.method.name(), r.mde))
                .collect::<Vec<_>>()
                .join(", ");
            out.push(Check {
                name: format!("proposed MDE lowest at grid {} m", first.grid_size),
                passed,
                detail,
            });

            let growth = |m: Method| {
                let a = first.result(m)?.mde;
                let b = last.result(m)?.mde;
                Some((b - a) / a)
            };
            let mut detail = Vec::new();
            let mut baseline_degrades = false;
            for r in &first.results {
                if let Some(g) = growth(r.method) {
                    detail.push(format!("{}={:+.1}%", r.method.name(), 100.0 * g));
                    if r.method != Method::Proposed && g > 0.25 {
                        baseline_degrades = true;
                    }
                }
            }
            let own = growth(Method::Proposed).unwrap_or(f64::INFINITY);
            out.push(Check {
                name: format!(
                    "grid {} -> {} m: proposed degrades < 25%, a baseline > 25%",
                    first.grid_size, last.grid_size
                ),
                passed: own < 0.25 && baseline_degrades,
                detail: detail.join(", "),
            });
        }
    }

    if let Some(reference) = reference_point(report) {
        let get = |m: Method| reference.result(m).map(|r| r.max_comparisons);
        if let (Some(p), Some(r), Some(c)) = (get(Method::Proposed), get(Method::Rwknn), get(Method::CfEls)) {
            out.push(Check {
                name: "comparisons proposed < rwknn < cf-els".into(),
                passed: p < r && r < c,
                detail: format!("proposed={p}, rwknn={r}, cf-els={c} (per-query maxima)"),
            });
            out.push(Check {
                name: "cf-els evaluates >= 10x the proposed comparisons".into(),
                passed: 10 * p <= c,
                detail: format!("ratio {:.1}", c as f64 / p.max(1) as f64),
            });
        }
        if let Some(ratio) = reference.result(Method::Proposed).and_then(|r| r.max_complexity_ratio) {
            out.push(Check {
                name: format!("proposed comparisons <= {COMPLEXITY_FACTOR}(N_r + N_s + K)"),
                passed: ratio <= COMPLEXITY_FACTOR as f64,
                detail: format!("max ratio {ratio:.3}"),
            });
        }
    }
    out
}
