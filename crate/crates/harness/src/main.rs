use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cnls_harness::{emit_outputs, parse_config_with, run_experiment, ExperimentKind, HarnessError, Overrides};

#[derive(Parser)]
#[command(name = "cnls", version, about = "Batch experiments for coupled focusing NLS systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve one initial datum.
    Run(Common),
    /// Evolve c * u over a grid of amplitudes.
    Sweep(Common),
    /// Bisect the amplitude between a global and a blow-up run.
    Bisect(Common),
    /// Compute the ground state and evolve k * w.
    Instability(Common),
    /// Estimate a variational threshold.
    Threshold(Common),
    /// Run the weight, inequality and identity checks.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    config: PathBuf,
    #[arg(long)]
    p: Option<f64>,
    /// Amplitude factor (replaces the sweep grid).
    #[arg(long)]
    c: Option<f64>,
    /// Ground-state scaling (replaces the k grid).
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    t_max: Option<f64>,
    /// Points per axis (`n_lat` on the sphere).
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn execute(kind: ExperimentKind, args: Common) -> Result<Vec<String>, HarnessError> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| HarnessError::io(&args.config, e))?;
    let ov = Overrides {
        experiment: Some(kind),
        p: args.p,
        c: args.c,
        k: args.k,
        t_max: args.t_max,
        points: args.points,
        output: args.output,
        workers: args.workers,
        seed: args.seed,
    };
    let cfg = parse_config_with(&text, &ov).map_err(|e| match e {
        HarnessError::Validation(m) => HarnessError::Validation(format!("{}: {m}", args.config.display())),
        other => other,
    })?;
    let ex = run_experiment(&cfg)?;
    let written = emit_outputs(&ex.records, &ex.summary, &cfg.output)?;
    for w in &ex.summary.warnings {
        eprintln!("warning: {w}");
    }
    println!("{} runs, {} files written to {}", ex.summary.runs.len(), written.len(), cfg.output.display());
    Ok(ex.summary.failures)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (kind, args) = match cli.command {
        Command::Run(a) => (ExperimentKind::SingleRun, a),
        Command::Sweep(a) => (ExperimentKind::AmplitudeSweep, a),
        Command::Bisect(a) => (ExperimentKind::ThresholdBisect, a),
        Command::Instability(a) => (ExperimentKind::Instability, a),
        Command::Threshold(a) => (ExperimentKind::ThresholdEstimate, a),
        Command::Verify(a) => (ExperimentKind::IdentitySuite, a),
    };
    match execute(kind, args) {
        Ok(failures) if failures.is_empty() => ExitCode::SUCCESS,
        Ok(failures) => {
            for f in &failures {
                eprintln!("error: {f}");
            }
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
