use roadloc::bench::{emit_plot_data, plot_documents, run_sweep, BenchConfig, Experiment, Method, Sweep};
use roadloc::synth::{ChannelParams, LayoutSpec, RoadSpec};
use roadloc::Position2D;

fn small_experiment() -> Experiment {
    let layout = LayoutSpec {
        roads: vec![
            RoadSpec::new("s", &[(60.0, 100.0), (300.0, 100.0)]),
            RoadSpec::new("e", &[(400.0, 150.0), (400.0, 350.0)]),
        ],
        bs_positions: vec![
            Position2D::new(300.0, 300.0),
            Position2D::new(150.0, 130.0),
            Position2D::new(380.0, 250.0),
        ],
        ..LayoutSpec::default()
    };
    let channel = ChannelParams::hetnet(3, 7);
    let bench = BenchConfig {
        timing_repeats: 1,
        cfels_step: 0.5,
        ..BenchConfig::default()
    };
    Experiment { layout, channel, bench }
}

#[test]
fn grid_sweep_has_one_result_per_method_and_point() {
    let exp = small_experiment();
    let report = run_sweep(&exp, &Method::ALL, &Sweep::GridSize(vec![2.0, 6.0])).unwrap();
    assert_eq!(report.points.len(), 2);
    for p in &report.points {
        assert_eq!(p.results.len(), 4);
        assert_eq!(p.bs_count, 3);
        let n = p.results[0].errors.len();
        assert!(n > 0);
        for r in &p.results {
            assert_eq!(r.errors.len(), n, "{}", r.method.name());
            assert!(r.errors.iter().all(|e| e.is_finite() && *e >= 0.0));
            assert!(r.mean_delay_with_extraction_ms >= r.mean_delay_ms);
        }
    }
    let proposed = |i: usize| report.points[i].result(Method::Proposed).unwrap().mde;
    assert_eq!(proposed(0), proposed(1));
}

#[test]
fn bs_sweep_points_follow_counts() {
    let exp = small_experiment();
    let report = run_sweep(&exp, &[Method::Proposed], &Sweep::BsCount(vec![1, 3])).unwrap();
    let counts: Vec<usize> = report.points.iter().map(|p| p.bs_count).collect();
    assert_eq!(counts, [1, 3]);
    assert!(run_sweep(&exp, &[Method::Proposed], &Sweep::BsCount(vec![4])).is_err());
    assert!(run_sweep(&exp, &[], &Sweep::BsCount(vec![1])).is_err());
}

#[test]
fn errors_are_deterministic() {
    let exp = small_experiment();
    let methods = [Method::Proposed, Method::Rwknn];
    let a = run_sweep(&exp, &methods, &Sweep::GridSize(vec![4.0])).unwrap();
    let b = run_sweep(&exp, &methods, &Sweep::GridSize(vec![4.0])).unwrap();
    for (x, y) in a.points[0].results.iter().zip(&b.points[0].results) {
        assert_eq!(x.errors, y.errors);
        assert_eq!(x.mde.to_bits(), y.mde.to_bits());
        assert_eq!(x.max_comparisons, y.max_comparisons);
    }
}

#[test]
fn plot_data_is_written_and_stable() {
    let exp = small_experiment();
    let report = run_sweep(&exp, &[Method::Proposed, Method::Gift], &Sweep::GridSize(vec![2.0])).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = emit_plot_data(&report, dir.path()).unwrap();
    let names: Vec<String> = paths
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    for want in ["fig3a.csv", "fig3b.csv", "fig4a.csv", "fig4b.csv", "fig5.csv", "table1.csv", "summary.json"] {
        assert!(names.iter().any(|n| n == want), "missing {want}");
    }
    let fig5 = std::fs::read_to_string(dir.path().join("fig5.csv")).unwrap();
    assert!(fig5.starts_with("method,error_m,cumulative_fraction\n"));
    let last_proposed = fig5.lines().filter(|l| l.starts_with("proposed,")).next_back().unwrap();
    assert!(last_proposed.ends_with(",1.000000"), "{last_proposed}");
    let docs = plot_documents(&report).unwrap();
    for (name, text) in &docs {
        assert_eq!(&std::fs::read_to_string(dir.path().join(name)).unwrap(), text);
    }
    assert_eq!(docs, plot_documents(&report).unwrap());
}
