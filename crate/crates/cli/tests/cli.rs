use std::path::Path;
use std::process::{Command, Output};

fn roadloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roadloc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn pipeline_on_own_traversal() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let gen = roadloc(&["generate", "--out", arg(d), "--set", "shadowing_sigma_db=0"]);
    assert!(gen.status.success(), "{}", stderr(&gen));
    for f in ["dataset.csv", "ground_truth.csv", "queries.csv", "queries_truth.csv", "config.toml"] {
        assert!(d.join(f).is_file(), "{f} missing");
    }
    let echo = std::fs::read_to_string(d.join("config.toml")).unwrap();
    assert!(echo.contains("shadowing_sigma_db = 0.0"), "{echo}");

    let map = d.join("map.json");
    let build = roadloc(&["build-map", "--data", arg(d), "--out", arg(&map)]);
    assert!(build.status.success(), "{}", stderr(&build));

    let results = d.join("results.jsonl");
    let loc = roadloc(&[
        "localize",
        "--map",
        arg(&map),
        "--query",
        arg(&d.join("queries.csv")),
        "--out",
        arg(&results),
        "--truth",
        arg(&d.join("queries_truth.csv")),
    ]);
    assert!(loc.status.success(), "{}", stderr(&loc));
    let text = std::fs::read_to_string(&results).unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(!lines.is_empty());
    for key in ["window_id", "road_id", "subsegment", "posterior", "x", "y", "comparisons"] {
        assert!(lines[0].get(key).is_some(), "missing {key}");
    }
    assert!(stderr(&loc).contains("against truth"));

    let inspect = roadloc(&["inspect", "--map", arg(&map)]);
    assert!(inspect.status.success());
    let out = String::from_utf8(inspect.stdout).unwrap();
    assert!(out.starts_with("m=4 roads"), "{out}");
    assert!(out.contains("prior"));
}

#[test]
fn generate_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = roadloc(&["generate", "--out", arg(d.path()), "--set", "seed=7"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["dataset.csv", "queries.csv", "queries_truth.csv"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn usage_errors_exit_two() {
    let unknown_flag = roadloc(&["inspect", "--frobnicate"]);
    assert_eq!(unknown_flag.status.code(), Some(2));
    assert!(stderr(&unknown_flag).contains("Usage"));

    let missing = roadloc(&["inspect", "--map", "/nonexistent/map.json"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(stderr(&missing).contains("Usage"));

    let dir = tempfile::tempdir().unwrap();
    let bad_key = roadloc(&["generate", "--out", arg(dir.path()), "--set", "l_mni=3"]);
    assert_eq!(bad_key.status.code(), Some(2));
    assert!(stderr(&bad_key).contains("l_mni"));

    let foreign = dir.path().join("foreign.json");
    std::fs::write(
        &foreign,
        r#"{"schema":"roadloc/radio-map","version":99,"feature_layout_version":1}"#,
    )
    .unwrap();
    let version = roadloc(&["inspect", "--map", arg(&foreign)]);
    assert_eq!(version.status.code(), Some(2));
    assert!(stderr(&version).contains("version"), "{}", stderr(&version));

    let bad_csv = dir.path().join("bad.csv");
    std::fs::write(&bad_csv, "road,idx\n").unwrap();
    let schema = roadloc(&["build-map", "--data", arg(&bad_csv), "--out", arg(&dir.path().join("m.json"))]);
    assert_eq!(schema.status.code(), Some(2));
}

#[test]
fn pipeline_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = d.join("tiny.csv");
    std::fs::write(&data, "road_id,idx,x,y,rsrp_0\na,0,0,0,-70\na,1,1,0,-71\na,2,2,0,-72\n").unwrap();
    let map = d.join("m.json");
    let build = roadloc(&["build-map", "--data", arg(&data), "--out", arg(&map)]);
    assert!(build.status.success(), "{}", stderr(&build));
    // Queries with two base stations against a one-station map.
    let query = d.join("q.csv");
    std::fs::write(&query, "window_id,idx,spacing,rsrp_0,rsrp_1\nw,0,0,-70,-80\nw,1,1,-71,-81\n").unwrap();
    let o = roadloc(&["localize", "--map", arg(&map), "--query", arg(&query), "--out", arg(&d.join("r.jsonl"))]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("dimension mismatch"), "{}", stderr(&o));
}

#[test]
fn bench_writes_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("reports");
    let o = roadloc(&[
        "bench",
        "--out",
        arg(&out),
        "--methods",
        "proposed,rwknn",
        "--set",
        "bs_counts=[6]",
        "--set",
        "grid_sizes=[2.0, 10.0]",
        "--set",
        "timing_repeats=1",
    ]);
    assert!(o.status.code().is_some_and(|c| c <= 1), "{}", stderr(&o));
    for f in ["fig3a.csv", "fig3b.csv", "fig4a.csv", "fig4b.csv", "fig5.csv", "table1.csv", "summary.json", "config.toml"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let fig4b = std::fs::read_to_string(out.join("fig4b.csv")).unwrap();
    assert_eq!(fig4b.lines().next(), Some("grid_size_m,method,mde_m"));
    assert_eq!(fig4b.lines().count(), 1 + 2 * 2);
    assert!(!fig4b.contains("cf-els"));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("PASS") || stdout.contains("FAIL"), "{stdout}");
}
