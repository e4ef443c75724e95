use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use craftchain::agents::AgentKind;
use craftchain::harness::{self, ReportFormat, RunConfig, Workspace};
use log::info;

#[derive(Parser)]
#[command(
    name = "craftchain",
    version,
    about = "Train and evaluate the hierarchical crafting agent"
)]
struct Cli {
    /// TOML run configuration; missing keys take their defaults.
    #[arg(long, short, global = true, default_value = "configs/default.toml")]
    config: PathBuf,
    /// Artifact directory (demos/, models/, reports/).
    #[arg(long, short, global = true, default_value = "artifacts")]
    workdir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Record scripted demonstrations.
    GenDemos,
    /// Cluster demonstrated actions into the discrete action table.
    FitActions,
    /// Train one subtask agent. Only choptree interacts with the environment.
    TrainAgent {
        #[arg(long)]
        kind: AgentKind,
    },
    /// Learn the division thresholds and the phase classifier.
    TrainScheduler,
    /// Run the hierarchical policy on the evaluation seeds. Evaluation frames
    /// are not charged to the training budget.
    Evaluate,
    /// Render the milestone report from the evaluation scores.
    Report {
        #[arg(long, default_value = "markdown")]
        format: ReportFormat,
    },
    /// Train and evaluate the flat behaviour-cloning baseline.
    Baseline,
    /// Every stage in order, from a fresh frame budget.
    Pipeline,
    /// Print the configuration with all defaults filled in.
    ShowConfig,
}

fn run(cli: Cli) -> Result<()> {
    let cfg = RunConfig::load(&cli.config)?;
    let ws = Workspace::new(&cli.workdir);
    let t0 = Instant::now();
    match cli.command {
        Command::GenDemos => println!("{}", harness::gen_demos(&cfg, &ws)?.display()),
        Command::FitActions => println!("{}", harness::fit_actions(&cfg, &ws)?.display()),
        Command::TrainAgent { kind } => {
            let s = harness::train_agent(&cfg, &ws, kind)?;
            println!("{} ({} frames)", s.path.display(), s.frames_used);
        }
        Command::TrainScheduler => {
            println!("{}", harness::train_scheduler_stage(&cfg, &ws)?.display())
        }
        Command::Evaluate => {
            let r = harness::evaluate_stage(&cfg, &ws)?;
            print!("{}", r.to_markdown());
        }
        Command::Report { format } => println!("{}", harness::report_stage(&ws, format)?.display()),
        Command::Baseline => {
            let r = harness::baseline_stage(&cfg, &ws)?;
            print!("{}", r.to_markdown());
        }
        Command::Pipeline => {
            let s = harness::run_pipeline(&cfg, &ws)?;
            print!("{}", s.report.to_markdown());
            println!(
                "Baseline mean score: {:.3}. Training frames: {}.",
                s.baseline.mean_score, s.frames_used
            );
        }
        Command::ShowConfig => print!("{}", cfg.to_toml()),
    }
    info!("done in {:.1}s", t0.elapsed().as_secs_f64());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli).context("craftchain failed") {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
