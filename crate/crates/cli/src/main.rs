use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ftdnav::sim::{
    compare, compute_metrics, run_scenario, Metrics, PlannerKind, ScenarioConfig, SimTrace, SuiteConfig,
};

mod plot;

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Core(#[from] ftdnav::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

type CliResult<T> = Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Scenario runner for the FTD-map NMPC navigation stack.
#[derive(Debug, Parser)]
#[command(name = "ftdnav", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario; writes trace.csv and metrics.json.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// ours | dcbf-ellipsoid | depth-cbf-qp (default: the scenario's choice)
        #[arg(long)]
        planner: Option<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Reserved; runs are always headless.
        #[arg(long, default_value_t = true)]
        headless: bool,
    },
    /// Run every scenario × planner of a suite file; writes comparison.json.
    Suite {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Render a trace as SVG, optionally over the scenario geometry.
    Plot {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value = "plot.svg")]
        out: PathBuf,
    },
}

fn write_run(dir: &Path, trace: &SimTrace, metrics: &Metrics) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let trace_path = dir.join("trace.csv");
    fs::write(&trace_path, trace.to_csv_string()).map_err(io_err(&trace_path))?;
    let metrics_path = dir.join("metrics.json");
    fs::write(&metrics_path, serde_json::to_string_pretty(metrics)? + "\n").map_err(io_err(&metrics_path))?;
    Ok(())
}

fn cmd_run(scenario: &Path, planner: Option<&str>, out: &Path, seed: Option<u64>) -> CliResult<Metrics> {
    let planner = planner.map(str::parse::<PlannerKind>).transpose()?;
    let mut cfg = ScenarioConfig::load(scenario)?;
    if let Some(p) = planner {
        cfg.planner = p;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let (trace, metrics) = run_scenario(&cfg)?;
    write_run(out, &trace, &metrics)?;
    println!(
        "{} [{}]: {} in {:.2} s, path {:.3} m, min clearance {:.3} m",
        cfg.name,
        cfg.planner,
        metrics.outcome.as_str(),
        trace.rows.last().map_or(0.0, |r| r.time),
        metrics.path_length,
        metrics.mu_d
    );
    Ok(metrics)
}

fn cmd_suite(suite: &Path, out: &Path) -> CliResult<()> {
    let cfg = SuiteConfig::load(suite)?;
    let base = suite.parent().unwrap_or(Path::new("."));
    let scenarios = cfg.scenarios(base)?;
    let mut runs = Vec::new();
    for (rel, sc) in &scenarios {
        let key = Path::new(rel)
            .file_stem()
            .map_or_else(|| rel.clone(), |s| s.to_string_lossy().into_owned());
        for planner in &cfg.planners {
            let mut sc = sc.clone();
            sc.planner = *planner;
            let (trace, metrics) = run_scenario(&sc)?;
            write_run(&out.join(&key).join(planner.id()), &trace, &metrics)?;
            println!(
                "{key:<24} {:<15} {:<9} path {:>7.3} m  clearance {:.3} m",
                planner.id(),
                metrics.outcome.as_str(),
                metrics.path_length,
                metrics.mu_d
            );
            runs.push((key.clone(), *planner, metrics));
        }
    }
    let comparison = compare(&runs);
    for r in &comparison.success_rates {
        println!("success rate {:<15} {}/{}", r.planner.id(), r.successes, r.runs);
    }
    fs::create_dir_all(out).map_err(io_err(out))?;
    let path = out.join("comparison.json");
    fs::write(&path, serde_json::to_string_pretty(&comparison)? + "\n").map_err(io_err(&path))?;
    Ok(())
}

fn cmd_plot(trace: &Path, scenario: Option<&Path>, out: &Path) -> CliResult<()> {
    let t = SimTrace::load(trace).map_err(|e| match e {
        ftdnav::Error::Io(source) => CliError::Io {
            path: trace.to_path_buf(),
            source,
        },
        other => CliError::Core(other),
    })?;
    let world = scenario.map(ScenarioConfig::load).transpose()?;
    let metrics = compute_metrics(&t);
    let svg = plot::render(&t, world.as_ref(), &metrics);
    fs::write(out, svg).map_err(io_err(out))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run {
            scenario,
            planner,
            out,
            seed,
            headless: _,
        } => cmd_run(scenario, planner.as_deref(), out, *seed).map(|_| ()),
        Command::Suite { suite, out } => cmd_suite(suite, out),
        Command::Plot { trace, scenario, out } => cmd_plot(trace, scenario.as_deref(), out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
