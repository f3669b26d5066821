use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kdm_cli::{run, CliError, Command, RunConfig};

#[derive(Parser)]
#[command(name = "kdm", version, about = "Koopman distillation of 2D diffusion teachers")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(clap::Args)]
struct Common {
    /// key=value config file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed of this command's stage.
    #[arg(long)]
    seed: Option<u64>,
    /// Also copy the primary artifact here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Sub {
    /// Train the EDM or flow-matching teacher.
    TrainTeacher(Common),
    /// Harvest noise-to-data pairs from the teacher.
    GenPairs(Common),
    /// Distil the one-step Koopman student from the pairs.
    TrainKdm(Common),
    /// Write samples of the teacher or the student as CSV.
    Sample(Common),
    /// Write every evaluation report and figure.
    Eval(Common),
    /// Fit EDMD liftings and check semantic proximity on the teacher's end map.
    VerifyTheory(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, common) = match cli.command {
        Sub::TrainTeacher(c) => (Command::TrainTeacher, c),
        Sub::GenPairs(c) => (Command::GenPairs, c),
        Sub::TrainKdm(c) => (Command::TrainKdm, c),
        Sub::Sample(c) => (Command::Sample, c),
        Sub::Eval(c) => (Command::Eval, c),
        Sub::VerifyTheory(c) => (Command::VerifyTheory, c),
    };
    match execute(cmd, &common) {
        Ok(lines) => {
            for line in lines {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.one_line());
            ExitCode::FAILURE
        }
    }
}

fn execute(cmd: Command, common: &Common) -> Result<Vec<String>, CliError> {
    let mut cfg = RunConfig::load(&common.config)?.with_env();
    if let Some(seed) = common.seed {
        cmd.apply_seed(&mut cfg, seed);
    }
    let outcome = run(cmd, &cfg, common.out.as_deref())?;
    let mut lines = vec![format!("artifact={}", outcome.primary.display())];
    lines.extend(outcome.summary);
    Ok(lines)
}
