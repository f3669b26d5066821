//! Command-line pipeline: teacher training, pair harvest, student distillation, sampling,
//! evaluation and theory checks, all driven by one key=value config file.

// Validation is written as `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;

use std::path::{Path, PathBuf};

pub use config::RunConfig;
pub use error::{CliError, CliResult};

use commands::Outcome;

/// The six subcommands.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    TrainTeacher,
    GenPairs,
    TrainKdm,
    Sample,
    Eval,
    VerifyTheory,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::TrainTeacher,
        Command::GenPairs,
        Command::TrainKdm,
        Command::Sample,
        Command::Eval,
        Command::VerifyTheory,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::TrainTeacher => "train-teacher",
            Command::GenPairs => "gen-pairs",
            Command::TrainKdm => "train-kdm",
            Command::Sample => "sample",
            Command::Eval => "eval",
            Command::VerifyTheory => "verify-theory",
        }
    }

    /// Applies `--seed` to the seed this command owns.
    pub fn apply_seed(self, cfg: &mut RunConfig, seed: u64) {
        match self {
            Command::TrainTeacher => cfg.teacher.seed = seed,
            Command::GenPairs => cfg.pairs.seed = seed,
            Command::TrainKdm => cfg.kdm.seed = seed,
            Command::Sample => cfg.sample.seed = seed,
            Command::Eval => cfg.eval.seed = seed,
            Command::VerifyTheory => cfg.theory.seed = seed,
        }
    }
}

/// Runs `cmd` with `cfg` (already seed-adjusted) and copies the primary artifact to `out`
/// when given.
pub fn run(cmd: Command, cfg: &RunConfig, out: Option<&Path>) -> CliResult<Outcome> {
    let outcome = with_threads(cfg.threads, || match cmd {
        Command::TrainTeacher => commands::cmd_train_teacher(cfg),
        Command::GenPairs => commands::cmd_gen_pairs(cfg),
        Command::TrainKdm => commands::cmd_train_kdm(cfg),
        Command::Sample => commands::cmd_sample(cfg),
        Command::Eval => commands::cmd_eval(cfg),
        Command::VerifyTheory => commands::cmd_verify_theory(cfg),
    })?;
    if let Some(out) = out {
        copy_to(&outcome.primary, out)?;
    }
    Ok(outcome)
}

fn copy_to(from: &Path, to: &Path) -> CliResult<PathBuf> {
    if let Some(dir) = to.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::copy(from, to).map_err(|e| CliError::io(to, e))?;
    Ok(to.to_path_buf())
}

#[cfg(feature = "parallel")]
fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> CliResult<T> + Send) -> CliResult<T> {
    if threads <= 1 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::key("threads", e.to_string()))?;
    pool.install(f)
}

#[cfg(not(feature = "parallel"))]
fn with_threads<T: Send>(_threads: usize, f: impl FnOnce() -> CliResult<T> + Send) -> CliResult<T> {
    f()
}
