use std::fs;
use std::path::Path;

use greyplace_core::harness::report::{convergence_table, read_summary_csv, write_heatmaps};
use greyplace_core::harness::{cells, load_cells, profile_snapshot, run_matrix, ExperimentConfig};
use greyplace_core::objective::read_observations_csv;
use greyplace_core::optimizers::{read_trace_csv, Method};

const CONFIG: &str = r#"
scenario = "t1"
methods = ["greedy", "bo", "dgbo"]
epsilons = [1.0]
sensor_counts = [1, 2]
seeds = [0, 1]
budget = 6
prior_budget_mode = "free"
snapshot_every = 2

[forest]
n_trees = 10

[sampler]
n_random = 50
n_neighbors = 50
"#;

fn config() -> ExperimentConfig {
    let cfg = ExperimentConfig::from_toml_str(CONFIG, "test").unwrap();
    cfg.validate().unwrap();
    cfg
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap()
}

// observations.csv without the wall-clock column
fn without_seconds(text: &str) -> Vec<String> {
    text.lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect()
}

#[test]
fn matrix_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    let cfg = config();

    let first = run_matrix(&cfg, out).unwrap();
    assert_eq!(first.completed.len(), 12);
    assert!(first.failed.is_empty(), "{:?}", first.failed);
    assert!(out.join("config.toml").is_file());
    let reread = ExperimentConfig::from_toml_str(&read(&out.join("config.toml")), "written").unwrap();
    assert_eq!(reread, cfg);

    let cells = load_cells(out).unwrap();
    assert_eq!(cells.len(), 12);
    for c in &cells {
        let trace = read_trace_csv(fs::File::open(c.dir.join("trace.csv")).unwrap()).unwrap();
        assert_eq!(trace.len(), c.summary.queries_used + c.summary.free_queries);
        assert_eq!(c.summary.queries_used, 6);
        if c.summary.method == Method::Dgbo {
            assert_eq!(c.summary.free_queries, 49);
        }
    }

    // summary.csv against a recomputation from the per-cell summaries
    let rows = read_summary_csv(&out.join("summary.csv")).unwrap();
    assert_eq!(rows.len(), 6);
    for r in &rows {
        let group: Vec<f64> = cells
            .iter()
            .filter(|c| c.summary.method == r.method && c.summary.target_sensors.map(|d| d as f64) == r.sensors)
            .filter_map(|c| c.summary.best_value)
            .collect();
        assert_eq!(r.seeds, 2);
        if r.method == Method::Greedy {
            // 6 queries never complete a 49-location sweep
            assert!(group.is_empty());
            assert_eq!(r.mean, None);
            continue;
        }
        let n = group.len() as f64;
        let mean = group.iter().sum::<f64>() / n;
        let std = (group.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((r.mean.unwrap() - mean).abs() < 1e-12);
        assert!((r.std.unwrap() - std).abs() < 1e-12);
    }
    assert!(read(&out.join("summary.csv")).lines().any(|l| l.starts_with("greedy,") && l.contains(",-,")));

    // restart: everything on disk is skipped, a removed cell is redone identically
    let victim = cells.iter().find(|c| c.summary.method == Method::Dgbo).unwrap().dir.clone();
    let trace_before = read(&victim.join("trace.csv"));
    let obs_before = read(&victim.join("observations.csv"));
    let again = run_matrix(&cfg, out).unwrap();
    assert_eq!((again.completed.len(), again.skipped.len()), (0, 12));
    fs::remove_dir_all(&victim).unwrap();
    fs::create_dir(out.join(".stale.partial")).unwrap();
    let redo = run_matrix(&cfg, out).unwrap();
    assert_eq!((redo.completed.len(), redo.skipped.len()), (1, 11));
    assert_eq!(read(&victim.join("trace.csv")), trace_before);
    assert_eq!(without_seconds(&read(&victim.join("observations.csv"))), without_seconds(&obs_before));
    assert_eq!(load_cells(out).unwrap().len(), 12);

    let mut conv = Vec::new();
    assert_eq!(convergence_table(&cells, &mut conv).unwrap(), 2);
    let conv = String::from_utf8(conv).unwrap();
    assert!(conv.starts_with("epsilon,D,target,dgbo_hit,bo_hit,reduction_percent"));

    let maps = tmp.path().join("maps");
    fs::create_dir(&maps).unwrap();
    let written = write_heatmaps(&cells, &maps).unwrap();
    assert_eq!(written.len(), 6);
    for p in &written {
        let pgm = read(&p.with_extension("pgm"));
        assert!(pgm.starts_with("P2\n7 7\n255\n"));
    }

    let dgbo = cells.iter().find(|c| c.summary.method == Method::Dgbo).unwrap();
    let snap = profile_snapshot(dgbo, 0).unwrap();
    assert_eq!((snap.rows, snap.cols), (7, 7));
    let priors = read_observations_csv(fs::File::open(dgbo.dir.join("observations.csv")).unwrap()).unwrap();
    for (i, v) in snap.values.iter().enumerate() {
        assert_eq!(*v, priors[i].value, "region {i} at iteration 0 is its prior");
    }
    assert!(profile_snapshot(dgbo, 4).is_ok());
    assert!(profile_snapshot(dgbo, 3).is_err());
}

#[test]
fn invalid_configs_are_rejected() {
    for bad in [
        "methods = [\"annealing\"]",
        "budget = 0",
        "epsilons = [-1.0]",
        "unknown_key = 1",
        "scenario = \"t9\"",
    ] {
        let parsed = ExperimentConfig::from_toml_str(bad, "bad");
        assert!(parsed.and_then(|c| c.validate()).is_err(), "{bad} accepted");
    }
}

#[test]
fn cell_count_is_the_matrix_product() {
    let mut cfg = config();
    cfg.methods = vec![Method::Bo, Method::Dgbo];
    assert_eq!(cells(&cfg).len(), 8);
    cfg.methods.push(Method::Ga);
    // GA picks its own sensor count: one cell per seed
    assert_eq!(cells(&cfg).len(), 10);
    let names: std::collections::HashSet<String> = cells(&cfg).iter().map(|c| c.dir_name()).collect();
    assert_eq!(names.len(), 10);
}
