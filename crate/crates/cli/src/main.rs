mod queries;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{CommandFactory, Parser, Subcommand};
use roadloc::bench::{checks, emit_plot_data, run_all, Method};
use roadloc::config::Config;
use roadloc::features::feature_label;
use roadloc::localizer::{build_map, load_map, localize_window, save_map};
use roadloc::signal::{parse_dataset, serialize_dataset, serialize_ground_truth};
use roadloc::synth::{generate, generate_repeat};

/// Road-aware vehicle localization from cellular signal strength.
#[derive(Parser)]
#[command(name = "roadloc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Flat TOML config; every key is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set l_min=12`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a training drive and a held-out query drive.
    Generate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a radio map from a dataset CSV or a `generate` directory.
    BuildMap {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Localize every query window; one JSON object per line.
    Localize {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        query: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// `queries_truth.csv`; prints accuracy to standard error.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Run the base-station and grid-size sweeps and write plot data.
    Bench {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated subset of proposed, rwknn, gift, cf-els.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
    },
    /// Print roads, sub-segments, masks and priors of a map.
    Inspect {
        #[arg(long)]
        map: PathBuf,
    },
}

enum Failure {
    Usage(anyhow::Error),
    Pipeline(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Pipeline(e)
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn read_input(path: &Path) -> Outcome<String> {
    std::fs::read_to_string(path).map_err(|e| usage(anyhow!("reading {}: {e}", path.display())))
}

fn write_output(path: &Path, text: &str) -> Outcome<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn load_config(args: &ConfigArgs) -> Outcome<Config> {
    Config::load(args.config.as_deref(), &args.overrides).map_err(usage)
}

fn open_map(path: &Path) -> Outcome<roadloc::localizer::RadioMap> {
    load_map(&read_input(path)?).map_err(|e| usage(anyhow!("{}: {e}", path.display())))
}

fn cmd_generate(args: &ConfigArgs, out: &Path) -> Outcome<()> {
    let config = load_config(args)?;
    let exp = config.experiment().map_err(usage)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let train = generate(&exp.layout, &exp.channel).context("generating training drive")?;
    let drive = generate_repeat(
        &exp.layout,
        &exp.channel,
        config.heldout_seed,
        config.heldout_rho,
    )
    .context("generating query drive")?;
    let window = config.query_window();
    let (q, truth) = queries::write_queries(&drive, window, (window / 2).max(1))?;
    write_output(&out.join("dataset.csv"), &serialize_dataset(&train))?;
    write_output(&out.join("ground_truth.csv"), &serialize_ground_truth(&train))?;
    write_output(&out.join("queries.csv"), &q)?;
    write_output(&out.join("queries_truth.csv"), &truth)?;
    write_output(&out.join("config.toml"), &config.to_toml())?;
    eprintln!(
        "wrote {} roads, {} samples, {} base stations to {}",
        train.roads().len(),
        train.roads().iter().map(|r| r.len()).sum::<usize>(),
        train.bs_count(),
        out.display()
    );
    Ok(())
}

fn cmd_build_map(data: &Path, args: &ConfigArgs, out: &Path) -> Outcome<()> {
    let config = load_config(args)?;
    let path = if data.is_dir() { data.join("dataset.csv") } else { data.to_path_buf() };
    let scenario = parse_dataset(&read_input(&path)?).map_err(|e| usage(anyhow!("{}: {e}", path.display())))?;
    let map = build_map(&scenario, &config.map_config()).context("building radio map")?;
    write_output(out, &save_map(&map))?;
    eprintln!(
        "map: {} roads, {} sub-segments, window {} samples",
        map.roads.len(),
        map.subsegment_count(),
        map.window
    );
    Ok(())
}

#[derive(serde::Serialize)]
struct ResultLine<'a> {
    window_id: &'a str,
    road_id: &'a str,
    subsegment: usize,
    posterior: f64,
    x: f64,
    y: f64,
    t: f64,
    residual_db: f64,
    comparisons: usize,
    elapsed_ms: f64,
}

fn cmd_localize(map: &Path, query: &Path, out: &Path, truth: Option<&Path>) -> Outcome<()> {
    let map = open_map(map)?;
    let windows = queries::parse_queries(&read_input(query)?)
        .map_err(|e| usage(e.context(query.display().to_string())))?;
    let truth = match truth {
        Some(p) => Some(queries::parse_truth(&read_input(p)?).map_err(usage)?),
        None => None,
    };
    let file = std::fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
    let mut writer = std::io::BufWriter::new(file);
    let (mut errors, mut road_hits) = (Vec::new(), 0usize);
    for w in &windows {
        let seq = w.sequence().with_context(|| format!("window {}", w.id))?;
        let r = localize_window(&seq, &map).with_context(|| format!("window {}", w.id))?;
        let line = ResultLine {
            window_id: &w.id,
            road_id: &r.road_id,
            subsegment: r.subsegment,
            posterior: r.posterior,
            x: r.position.x,
            y: r.position.y,
            t: r.t,
            residual_db: r.residual_db,
            comparisons: r.work.comparisons(),
            elapsed_ms: r.elapsed_ms,
        };
        serde_json::to_writer(&mut writer, &line).context("writing result")?;
        writeln!(writer).context("writing result")?;
        if let Some(t) = truth.as_ref().and_then(|t| t.iter().find(|t| t.window_id == w.id)) {
            errors.push(r.position.distance(&roadloc::Position2D::new(t.x, t.y)));
            road_hits += usize::from(t.road_id == r.road_id);
        }
    }
    writer.flush().context("writing results")?;
    eprintln!("localized {} windows", windows.len());
    if !errors.is_empty() {
        errors.sort_by(f64::total_cmp);
        eprintln!(
            "against truth: {} windows, road correct {:.1}%, mean error {:.2} m, median {:.2} m",
            errors.len(),
            100.0 * road_hits as f64 / errors.len() as f64,
            errors.iter().sum::<f64>() / errors.len() as f64,
            errors[errors.len() / 2]
        );
    }
    Ok(())
}

fn cmd_bench(args: &ConfigArgs, out: &Path, methods: Option<&[Method]>) -> Outcome<bool> {
    let config = load_config(args)?;
    let exp = config.experiment().map_err(usage)?;
    let methods = methods.unwrap_or(&Method::ALL);
    let k = exp.layout.bs_positions.len();
    let report = run_all(&exp, methods, &config.bs_sweep(k), &config.grid_sizes).context("running sweeps")?;
    let written = emit_plot_data(&report, out).context("writing plot data")?;
    write_output(&out.join("config.toml"), &config.to_toml())?;
    for p in &report.points {
        for r in &p.results {
            println!(
                "{:?} bs={} grid={} {:<8} mde={:>8.2} m  delay={:.4} ms  comparisons={:.0}",
                p.kind,
                p.bs_count,
                p.grid_size,
                r.method.name(),
                r.mde,
                r.mean_delay_ms,
                r.mean_comparisons
            );
        }
    }
    let mut all = true;
    for c in checks(&report) {
        all &= c.passed;
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    eprintln!("wrote {} files to {}", written.len() + 1, out.display());
    Ok(all)
}

fn cmd_inspect(map: &Path) -> Outcome<()> {
    let map = open_map(map)?;
    let k = map.bs_count;
    let labels = |m: &roadloc::salient::SelectionMask| {
        m.selected().iter().map(|&i| feature_label(i, k)).collect::<Vec<_>>().join(" ")
    };
    println!("m={} roads, K={k} base stations, window {} samples", map.roads.len(), map.window);
    println!(
        "l_min={} l_max={:?} pen={:?} f_max={} bins={}/{} degree={} priors={:?}",
        map.config.l_min,
        map.config.l_max,
        map.config.pen,
        map.config.f_max,
        map.config.rsrp_bin,
        map.config.gradient_bin,
        map.config.degree,
        map.config.priors
    );
    for r in &map.roads {
        println!(
            "road {}: length {:.1} m, {} sub-segments, mask [{}]",
            r.road_id,
            r.length,
            r.subsegments.len(),
            labels(&r.mask)
        );
        for s in &r.subsegments {
            println!(
                "  s{} rows {}..={} arc {:.1}-{:.1} m prior {:.4} mask [{}]",
                s.info.index,
                s.info.start,
                s.info.end,
                s.info.arc_start,
                s.info.arc_end,
                s.prior,
                labels(&s.mask)
            );
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Outcome<bool> {
    match &cli.command {
        Command::Generate { config, out } => cmd_generate(config, out).map(|_| true),
        Command::BuildMap { data, config, out } => cmd_build_map(data, config, out).map(|_| true),
        Command::Localize { map, query, out, truth } => cmd_localize(map, query, out, truth.as_deref()).map(|_| true),
        Command::Bench { config, out, methods } => cmd_bench(config, out, methods.as_deref()),
        Command::Inspect { map } => cmd_inspect(map).map(|_| true),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}\n\n{}", Cli::command().render_usage());
            ExitCode::from(2)
        }
        Err(Failure::Pipeline(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
