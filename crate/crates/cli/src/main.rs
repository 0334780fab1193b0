use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use greyplace_core::harness::report::{convergence_table, write_heatmaps, write_summary_csv};
use greyplace_core::harness::{
    build_scenarios, cells, load_cells, profile_snapshot, run_matrix, summarize, ExperimentConfig, Mode, SummaryRow,
};
use greyplace_core::Method;

#[derive(Parser)]
#[command(name = "greyplace", version, about = "Motion-sensor placement search for activity recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment matrix on simulated occupants.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Worker threads (defaults to all cores).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run an experiment matrix on a recorded CASAS log.
    Replay {
        #[arg(long)]
        casas: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Summaries, convergence table, heatmaps and expected-gain rasters
    /// from a finished results directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        convergence: bool,
        #[arg(long)]
        heatmap: bool,
        #[arg(long)]
        profile_iter: Option<usize>,
    },
    /// Check a config and print the matrix it describes.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl Failure {
    fn runtime(e: impl std::fmt::Display) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn load(path: &Path) -> Result<ExperimentConfig, Failure> {
    ExperimentConfig::load(path).map_err(|e| Failure::Config(e.to_string()))
}

fn set_workers(n: Option<usize>) -> Result<(), Failure> {
    if let Some(n) = n {
        if n == 0 {
            return Err(Failure::Config("--workers must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(Failure::runtime)?;
    }
    Ok(())
}

fn print_summary(rows: &[SummaryRow]) {
    println!("{:<7} {:>7} {:>5} {:>18} {:>5}", "method", "epsilon", "D", "F1", "seeds");
    for r in rows {
        let eps = r.epsilon.map_or("-".into(), |e| e.to_string());
        let d = r.sensors.map_or("-".into(), |d| {
            if r.method == Method::Ga {
                format!("[{d}]")
            } else {
                d.to_string()
            }
        });
        let f1 = match (r.mean, r.std) {
            (Some(m), Some(s)) => format!("{m:.4} ± {s:.4}"),
            _ => "-".into(),
        };
        println!("{:<7} {eps:>7} {d:>5} {f1:>18} {:>5}", r.method.to_string(), r.seeds);
    }
}

fn execute(cfg: &ExperimentConfig, out: &Path) -> Result<(), Failure> {
    let total = cells(cfg).len();
    eprintln!("running {total} cells into {}", out.display());
    let outcome = run_matrix(cfg, out).map_err(Failure::runtime)?;
    eprintln!(
        "{} completed, {} skipped, {} failed",
        outcome.completed.len(),
        outcome.skipped.len(),
        outcome.failed.len()
    );
    let records = load_cells(out).map_err(Failure::runtime)?;
    print_summary(&summarize(&records));
    if !outcome.failed.is_empty() {
        for (cell, err) in &outcome.failed {
            eprintln!("failed: {cell}: {err}");
        }
        return Err(Failure::Runtime(format!(
            "{} cells failed; see {}",
            outcome.failed.len(),
            out.join("failures.csv").display()
        )));
    }
    Ok(())
}

fn report(input: &Path, convergence: bool, heatmap: bool, profile_iter: Option<usize>) -> Result<(), Failure> {
    let records = load_cells(input).map_err(Failure::runtime)?;
    if records.is_empty() {
        return Err(Failure::Runtime(format!("no finished cells under {}", input.display())));
    }
    let rows = summarize(&records);
    write_summary_csv(&input.join("summary.csv"), &rows).map_err(Failure::runtime)?;
    print_summary(&rows);

    if convergence {
        let path = input.join("convergence.csv");
        let file = fs::File::create(&path).map_err(Failure::runtime)?;
        let n = convergence_table(&records, file).map_err(Failure::runtime)?;
        println!();
        print!("{}", fs::read_to_string(&path).map_err(Failure::runtime)?);
        eprintln!("{n} convergence rows written to {}", path.display());
    }
    if heatmap {
        let dir = input.join("heatmaps");
        fs::create_dir_all(&dir).map_err(Failure::runtime)?;
        let written = write_heatmaps(&records, &dir).map_err(Failure::runtime)?;
        eprintln!("{} heatmaps written to {}", written.len(), dir.display());
    }
    if let Some(n) = profile_iter {
        let dir = input.join("profiles");
        fs::create_dir_all(&dir).map_err(Failure::runtime)?;
        let mut count = 0;
        for c in records.iter().filter(|c| c.summary.method == Method::Dgbo) {
            let raster = profile_snapshot(c, n).map_err(Failure::runtime)?;
            let name = c.dir.file_name().and_then(|s| s.to_str()).unwrap_or("cell");
            let stem = dir.join(format!("{name}_iter_{n:04}"));
            raster
                .write_csv(fs::File::create(stem.with_extension("csv")).map_err(Failure::runtime)?)
                .map_err(Failure::runtime)?;
            let max = raster.values.iter().cloned().fold(0.0, f64::max);
            raster
                .write_pgm(fs::File::create(stem.with_extension("pgm")).map_err(Failure::runtime)?, max)
                .map_err(Failure::runtime)?;
            count += 1;
        }
        if count == 0 {
            return Err(Failure::Runtime("no DGBO cells to take profiles from".into()));
        }
        eprintln!("{count} expected-gain rasters written to {}", dir.display());
    }
    Ok(())
}

fn validate(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let scenarios = build_scenarios(cfg).map_err(|e| Failure::Config(e.to_string()))?;
    for (eps, s) in &scenarios {
        let label = eps.map_or("replay".into(), |e| format!("epsilon {e}"));
        println!("{label}: {} candidate locations ({}x{})", s.locations(), s.rows, s.cols);
        if let Some(&d) = cfg.sensor_counts.iter().find(|&&d| d > s.locations()) {
            return Err(Failure::Config(format!("{d} sensors exceed the {} locations of {label}", s.locations())));
        }
    }
    let methods: Vec<String> = cfg.methods.iter().map(|m| m.to_string()).collect();
    println!(
        "{} cells: methods [{}], seeds {:?}, budget {}",
        cells(cfg).len(),
        methods.join(", "),
        cfg.seed_list(),
        cfg.budget
    );
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, out, workers } => {
            let cfg = load(&config)?;
            set_workers(workers)?;
            execute(&cfg, &out)
        }
        Command::Replay {
            casas,
            config,
            out,
            workers,
        } => {
            let mut cfg = ExperimentConfig::read(&config).map_err(|e| Failure::Config(e.to_string()))?;
            cfg.mode = Mode::Replay;
            cfg.casas = Some(casas);
            cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
            set_workers(workers)?;
            execute(&cfg, &out)
        }
        Command::Report {
            input,
            convergence,
            heatmap,
            profile_iter,
        } => report(&input, convergence, heatmap, profile_iter),
        Command::Validate { config } => validate(&load(&config)?),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
