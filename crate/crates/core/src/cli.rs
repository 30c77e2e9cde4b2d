//! Command-line front end.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::{self, TaskKind};
use crate::run::{self, RunOptions, Status};

#[derive(Debug, Parser)]
#[command(name = "monowave", version, about = "Traveling waves and spreading speeds for monotone semiflows")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; holds the run directories and registry.jsonl.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Also write SVG plots.
    #[arg(long, global = true)]
    pub plots: bool,
    /// Worker threads for data-parallel work.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Equilibria and their stability labels.
    Equilibria,
    /// Randomized audit of the semiflow axioms.
    Verify,
    /// Monostable spreading speeds and the counter-propagation check.
    Speed,
    /// Bistable traveling wave (direct, iteration or time-periodic).
    Wave,
    /// Pulsating wave in a periodic medium.
    Pulsating,
    /// Principal periodic eigenvalue or steady-state table.
    Lambda1,
    /// Search for stable non-constant periodic steady states.
    Counterexample,
    /// Parameter sweep over the cartesian product of declared values.
    Sweep,
    /// Markdown digest of the registry in the output directory.
    Report,
}

impl Command {
    fn task(self) -> Option<TaskKind> {
        Some(match self {
            Command::Equilibria => TaskKind::Equilibria,
            Command::Verify => TaskKind::Verify,
            Command::Speed => TaskKind::Speed,
            Command::Wave => TaskKind::Wave,
            Command::Pulsating => TaskKind::Pulsating,
            Command::Lambda1 => TaskKind::Lambda1,
            Command::Counterexample => TaskKind::Counterexample,
            Command::Sweep => TaskKind::Sweep,
            Command::Report => return None,
        })
    }
}

fn fail(status: Status, msg: impl std::fmt::Display) -> i32 {
    eprintln!("error: {msg}");
    status as i32
}

/// Parses arguments, runs the command and returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { Status::Validation as i32 } else { 0 };
        }
    };
    if let Some(n) = cli.workers {
        // Fails only when a pool already exists, as in repeated in-process calls.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }

    let Some(task) = cli.command.task() else {
        let out = cli.out.unwrap_or_else(|| PathBuf::from("runs"));
        return match run::read_registry(&out) {
            Ok(records) => {
                let text = run::report(&records);
                let path = out.join("report.md");
                if let Err(e) = std::fs::write(&path, &text) {
                    return fail(Status::TaskFailure, e);
                }
                print!("{text}");
                0
            }
            Err(e) => fail(Status::Validation, format!("cannot read registry in {}: {e}", out.display())),
        };
    };

    let Some(path) = cli.config else {
        return fail(Status::Validation, "--config is required");
    };
    let loaded = match config::load(&path) {
        Ok(l) => l,
        Err(e) => return fail(Status::Validation, format!("{}: {e}", path.display())),
    };
    if let Some(t) = loaded.config.task {
        if t != task {
            return fail(
                Status::Validation,
                format!("config declares task `{}` but `{}` was requested", t.name(), task.name()),
            );
        }
    }
    let opts = RunOptions {
        out: cli.out.or_else(|| loaded.config.output.clone()).unwrap_or_else(|| PathBuf::from("runs")),
        seed: cli.seed.or(loaded.config.seed).unwrap_or(0),
        plots: cli.plots,
    };
    match run::execute(task, &loaded, &opts) {
        Ok((record, output)) => {
            println!("{}", opts.out.join(&record.run_dir).display());
            for m in &output.headline {
                println!("  {} = {} [{}]", m.name, m.value, m.unit);
            }
            for f in &output.failures {
                eprintln!("tolerance: {f}");
            }
            record.exit_code
        }
        Err(e) => fail(run::status_of(&e), e),
    }
}
