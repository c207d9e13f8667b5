//! `p2s`: batch pipeline for field-guided point-cloud attacks.
//!
//! Subcommands: `gen-data` (synthetic dataset), `train-victim`, `attack`
//! (one configuration over a manifest split), `eval` (aggregate run logs
//! into a report), `repro` (the full sweep: dataset, victim, six attack
//! configurations, report, ordering summary).
//!
//! Exit codes: 0 success, 2 usage, 3 data error, 4 numeric failure.
//! `P2S_LOG_LEVEL` (`quiet` | `info` | `debug`) controls stderr chatter.

mod commands;
mod config;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "p2s", version, about = "Field-guided adversarial attacks on point clouds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FieldBackendArg {
    Kde,
    Learned,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Ifgm,
    Pgd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum P2sArg {
    /// Forward field guidance.
    #[value(name = "+")]
    Plus,
    /// Reversed field guidance (ablation).
    #[value(name = "-")]
    Minus,
    /// No field term.
    Off,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic shape dataset and its manifest.
    GenData(GenDataArgs),
    /// Train the victim classifier on a manifest's train split.
    TrainVictim(TrainVictimArgs),
    /// Run one attack configuration over a manifest split.
    Attack(AttackArgs),
    /// Aggregate attack run logs into a CSV + JSON report.
    Eval(EvalArgs),
    /// One-shot pipeline: gen-data, train, six attack runs, eval, orderings.
    Repro(ReproArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// JSON config file; command-line flags win over file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; all randomness derives from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all logical cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct GenDataArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Output directory for clouds and manifest.
    #[arg(long)]
    out: PathBuf,
    /// Number of shape classes to use (2..=5).
    #[arg(long)]
    classes: Option<usize>,
    /// Instances per class.
    #[arg(long)]
    per_class: Option<usize>,
    /// Points per cloud.
    #[arg(long)]
    n_points: Option<usize>,
    /// Fraction of instances in the train split.
    #[arg(long)]
    train_fraction: Option<f64>,
}

#[derive(Args)]
struct TrainVictimArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Dataset manifest path.
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory (victim.p2sw, train_log.json).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    lr: Option<f64>,
}

#[derive(Args)]
struct AttackArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Dataset manifest path.
    #[arg(long)]
    manifest: PathBuf,
    /// Victim weight file.
    #[arg(long)]
    model: PathBuf,
    /// Output directory (attack_config.json, run_log.jsonl, adv/).
    #[arg(long)]
    out: PathBuf,
    /// Field backend used when the field term is on.
    #[arg(long, value_enum)]
    field: Option<FieldBackendArg>,
    /// Base attack engine.
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Field guidance sign: +, -, or off.
    #[arg(long, value_enum)]
    p2s: Option<P2sArg>,
    /// Field weighting hyperparameter.
    #[arg(long)]
    theta: Option<f64>,
    /// Step length per iteration.
    #[arg(long)]
    alpha: Option<f64>,
    /// Iteration budget.
    #[arg(long)]
    iters: Option<usize>,
    /// PGD per-coordinate clamp, or IFGM total-l2 budget.
    #[arg(long)]
    budget: Option<f64>,
    /// Halt each cloud at its first misclassification.
    #[arg(long)]
    stop_on_success: Option<bool>,
    /// Which manifest split to attack.
    #[arg(long, value_enum)]
    split: Option<SplitArg>,
    /// Training steps for per-cloud learned fields.
    #[arg(long)]
    field_steps: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Attack run directory; repeat for multiple report rows.
    #[arg(long = "run-log", required = true)]
    run_logs: Vec<PathBuf>,
    /// Output directory (report.csv, report.json).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReproArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Output directory for the whole pipeline.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    n_points: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    /// Field backend for the guided rows.
    #[arg(long, value_enum)]
    field: Option<FieldBackendArg>,
    /// Training steps for per-cloud learned fields.
    #[arg(long)]
    field_steps: Option<usize>,
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => 0,
        Err(err) => {
            let code = commands::exit_code(&err);
            let payload = serde_json::json!({
                "error": {
                    "code": code,
                    "message": format!("{err:#}"),
                }
            });
            eprintln!("{payload}");
            code
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenData(args) => commands::gen_data(args),
        Command::TrainVictim(args) => commands::train_victim(args),
        Command::Attack(args) => commands::attack(args),
        Command::Eval(args) => commands::eval(args),
        Command::Repro(args) => commands::repro(args),
    }
}
