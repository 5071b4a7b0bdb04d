use std::path::PathBuf;
use std::process::ExitCode;

use aaphase::config::ExperimentConfig;
use aaphase::experiment::{run, RunFlags, RunOutcome, Subcommand};
use clap::{Parser, ValueEnum};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Command {
    Simulate,
    Optimize,
    Scan,
    Noise,
    PhaseReport,
}

/// Geometric-phase experiments with two Rydberg atoms in optical tweezers.
#[derive(Debug, Parser)]
#[command(name = "aaphase", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Experiment config (key = value with unit suffixes).
    #[arg(long)]
    config: PathBuf,
    /// Overrides noise.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides output.dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optimizer checkpoint to continue from (optimize only).
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Suppress per-iteration progress lines.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let cmd = match cli.command {
        Command::Simulate => Subcommand::Simulate,
        Command::Optimize => Subcommand::Optimize,
        Command::Scan => Subcommand::Scan,
        Command::Noise => Subcommand::Noise,
        Command::PhaseReport => Subcommand::PhaseReport,
    };
    let flags = RunFlags {
        seed: cli.seed,
        out: cli.out,
        resume: cli.resume,
        progress: !cli.quiet,
    };
    let result = ExperimentConfig::load(&cli.config).and_then(|cfg| run(cmd, &cfg, &flags));
    match result {
        Ok(outcome) => {
            summarize(&outcome);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn summarize(outcome: &RunOutcome) {
    let report = match outcome {
        RunOutcome::Simulate(r) => &r.report,
        RunOutcome::Optimize {
            result,
            history,
            converged,
        } => {
            if let Some(last) = history.last() {
                println!(
                    "iterations {}  objective {:.6e}  |grad| {:.3e}  converged {converged}",
                    history.len(),
                    last.breakdown.total,
                    last.gradient_norm
                );
            }
            &result.report
        }
        RunOutcome::Scan(_, s) => {
            println!(
                "best r = {} um, d = {} um, objective {:.6e} ({} finite cells)",
                s.best.r, s.best.d, s.best.objective, s.finite_entries
            );
            if let (Some(e), Some(rank)) = (s.reference, s.reference_rank) {
                println!(
                    "reference r = {} um, d = {} um, objective {:.6e}, rank {:.1}%",
                    e.r,
                    e.d,
                    e.objective,
                    100.0 * rank
                );
            }
            return;
        }
        RunOutcome::Noise(stats) => {
            println!(
                "{} realizations, {} losses",
                stats.rows.len(),
                stats.losses.len()
            );
            for q in &stats.summary {
                println!(
                    "{:>12}: mean {:.6e} {}  std {:.3e}",
                    q.name, q.moments.mean, q.unit, q.moments.std
                );
            }
            return;
        }
        RunOutcome::PhaseReport(r) => r,
    };
    println!(
        "gamma_g {:.3} deg  gamma_d {:.3} deg  |<psi0|psiT>| {:.6}  F {:.6}  loop error {:.3e}/{:.3e} um",
        report.gamma_geometric,
        report.gamma_dynamical,
        report.overlap_modulus,
        report.separability_f,
        report.loop_error_r[0],
        report.loop_error_r[1]
    );
}
