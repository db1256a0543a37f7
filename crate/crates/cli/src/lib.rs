//! The `sdm` command suite. Each command resolves its settings (defaults, then
//! `--config`, then `--set`), writes its artifacts under `--out`, and records a
//! `manifest.json` from which the run can be repeated.
//!
//! Exit codes: 0 success, 1 bad invocation or input, 2 a numerical check failed.

pub mod commands;
mod error;
pub mod manifest;
pub mod settings;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use error::{Error, Result};
use manifest::Run;
use settings::Settings;

#[derive(Debug, Parser)]
#[command(name = "sdm", version, about = "Stationary distribution matching for offline RL")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML file layered over the built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; defaults to runs/<command>.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Dotted override such as `trainer.alpha=2.5`; repeatable, applied last.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Print the resolved settings as TOML and exit.
    #[arg(long, global = true)]
    print_config: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate an offline dataset (point mass or tabular).
    GenData,
    /// Generate the circle dataset and its train/test split.
    GenCircle,
    /// Stationary distribution, average reward and differential value of a tabular MDP.
    Solve,
    /// Check the change-of-variable identity and the model-error bounds on random instances.
    Verify {
        #[arg(long)]
        instances: Option<u64>,
        /// Worker threads; defaults to the available cores.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Fit a tabular MLE model or a dynamics ensemble to a dataset.
    FitModel,
    /// Train SDM-GAN on point-mass data, or run regularised improvement on tabular data.
    Train,
    /// Behaviour cloning on the circle dataset with several generator families.
    CloneCircle,
    /// Evaluate a policy on the point-mass environment.
    Eval,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenData => "gen-data",
            Command::GenCircle => "gen-circle",
            Command::Solve => "solve",
            Command::Verify { .. } => "verify",
            Command::FitModel => "fit-model",
            Command::Train => "train",
            Command::CloneCircle => "clone-circle",
            Command::Eval => "eval",
        }
    }
}

fn execute(cli: Cli, argv: Vec<String>) -> Result<()> {
    let c = cli.common;
    let mut overrides = c.overrides;
    if let Command::Verify { instances: Some(n), .. } = cli.command {
        overrides.push(format!("verify.instances={n}"));
    }
    let settings = Settings::resolve(c.config.as_deref(), &overrides)?;
    if c.print_config {
        print!("{}", settings.to_toml());
        return Ok(());
    }
    let name = cli.command.name();
    let out = c.out.unwrap_or_else(|| PathBuf::from("runs").join(name));
    let mut run = Run::new(name, argv, c.seed, out, settings)?;
    if let Some(p) = &c.config {
        run.input(p);
    }
    let result = match cli.command {
        Command::GenData => commands::gen_data(&mut run),
        Command::GenCircle => commands::gen_circle(&mut run),
        Command::Solve => commands::solve(&mut run),
        Command::Verify { workers, .. } => {
            let workers = workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            commands::verify(&mut run, workers.max(1))
        }
        Command::FitModel => commands::fit_model(&mut run),
        Command::Train => commands::train_cmd(&mut run),
        Command::CloneCircle => commands::clone_circle(&mut run),
        Command::Eval => commands::eval(&mut run),
    };
    match result {
        Ok(()) => run.finish("ok"),
        // the artifacts of a failed check are still worth a manifest
        Err(e @ Error::CheckFailed(_)) => {
            run.finish("check_failed")?;
            Err(e)
        }
        Err(e) => Err(e),
    }
}

/// Runs one command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let argv = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(cli, argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
