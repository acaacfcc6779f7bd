//! Command-line front end for the fault-localization laboratory.
//!
//! Exit codes: 0 on success, 2 on configuration errors, 3 when every sweep
//! point exceeded the exact-solver budget.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use closlab::experiment::{render_plotdata, run_experiment, ExperimentConfig};
use closlab::theory::{BoundInputs, BoundReport};
use closlab::topology::ClosParams;

#[derive(Parser)]
#[command(name = "closlab", version, about = "Clos/ECMP fault-localization laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single experiment configuration (no sweep axis).
    Simulate {
        /// JSON experiment configuration.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: `out/<config name>`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a parameter sweep configuration.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the closed-form bound report for a parameter file as JSON.
    Theory {
        /// JSON file: {"params": {...}, "t_max": .., "k": .., "p_b": ..,
        /// "p_g": .., "c_l": .., "c_u": .., "n_flows": ..}.
        #[arg(long)]
        params: PathBuf,
    },
    /// Re-render plot.svg from an output directory's plotdata.csv.
    Report {
        /// Directory holding plotdata.csv (and optionally config.json).
        #[arg(long = "in")]
        input: PathBuf,
    },
}

#[derive(serde::Deserialize)]
struct TheoryFile {
    params: ClosParams,
    #[serde(flatten)]
    inputs: BoundInputs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate { config, seed, out } => run_config(&config, seed, out, false),
        Command::Sweep { config, seed, out } => run_config(&config, seed, out, true),
        Command::Theory { params } => {
            let text = std::fs::read_to_string(&params)
                .with_context(|| format!("reading {}", params.display()))?;
            let file: TheoryFile = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", params.display()))?;
            println!("{}", BoundReport::compute(&file.params, &file.inputs).to_json());
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { input } => {
            let plotdata = std::fs::read_to_string(input.join("plotdata.csv"))
                .with_context(|| format!("reading {}/plotdata.csv", input.display()))?;
            let (title, axis) = chart_labels(&input);
            let svg = render_plotdata(&plotdata, &title, &axis)?;
            let path = input.join("plot.svg");
            std::fs::write(&path, svg).with_context(|| format!("writing {}", path.display()))?;
            println!("re-rendered {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn chart_labels(dir: &Path) -> (String, String) {
    let fallback = ("experiment".to_string(), "x".to_string());
    let Ok(text) = std::fs::read_to_string(dir.join("config.json")) else {
        return fallback;
    };
    let Ok(cfg) = ExperimentConfig::from_json(&text) else {
        return fallback;
    };
    let axis = cfg
        .sweep
        .as_ref()
        .map(|s| s.axis.label().to_string())
        .unwrap_or_else(|| "point".to_string());
    (cfg.name, axis)
}

fn run_config(
    path: &Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
    want_sweep: bool,
) -> Result<ExitCode> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut config = ExperimentConfig::from_json(&text)
        .with_context(|| format!("parsing {}", path.display()))?;
    if want_sweep && config.sweep.is_none() {
        bail!("config `{}` has no sweep axis; use `simulate`", config.name);
    }
    if !want_sweep && config.sweep.is_some() {
        bail!("config `{}` defines a sweep axis; use `sweep`", config.name);
    }
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let out_dir = out.unwrap_or_else(|| PathBuf::from("out").join(&config.name));
    let output = run_experiment(&config)?;
    output
        .write_to(&out_dir)
        .with_context(|| format!("writing artifacts to {}", out_dir.display()))?;
    print_summary(&config, &output);
    println!("artifacts written to {}", out_dir.display());
    if output.all_budget_exceeded {
        eprintln!("warning: exact-solver budget exceeded on every sweep point");
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn print_summary(config: &ExperimentConfig, output: &closlab::experiment::ExperimentOutput) {
    let axis = config
        .sweep
        .as_ref()
        .map(|s| s.axis.label())
        .unwrap_or("point");
    for point in &output.points {
        let x = point
            .axis_value
            .map(|v| v.to_string())
            .unwrap_or_else(|| point.point.to_string());
        for engine in &point.engines {
            let acc = engine
                .accuracy
                .map(|a| format!("{:.4}", a.mean))
                .unwrap_or_else(|| "-".to_string());
            println!(
                "{axis}={x} {}: accuracy={acc} precision={:.4} recall={:.4}{}",
                engine.engine.label(),
                engine.precision.mean,
                engine.recall.mean,
                if engine.budget_exceeded { " (budget exceeded)" } else { "" },
            );
        }
    }
}
