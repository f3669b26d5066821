//! Content-addressed artifact paths under the work directory.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::config::{RunConfig, SampleModel};
use crate::error::{CliError, CliResult};

/// A pipeline stage, which fixes the artifact directory and the config keys an artifact
/// depends on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Teacher,
    Pairs,
    Kdm,
    Eval,
    Theory,
    Sample,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Teacher => "teacher",
            Stage::Pairs => "pairs",
            Stage::Kdm => "kdm",
            Stage::Eval => "eval",
            Stage::Theory => "theory",
            Stage::Sample => "sample",
        }
    }

    /// Subdirectory of the work directory; samples live next to the evaluation reports.
    pub fn dir(self) -> &'static str {
        match self {
            Stage::Sample => "eval",
            s => s.name(),
        }
    }

    pub fn seed(self, cfg: &RunConfig) -> u64 {
        match self {
            Stage::Teacher => cfg.teacher.seed,
            Stage::Pairs => cfg.pairs.seed,
            Stage::Kdm => cfg.kdm.seed,
            Stage::Eval => cfg.eval.seed,
            Stage::Theory => cfg.theory.seed,
            Stage::Sample => cfg.sample.seed,
        }
    }

    /// Config sections this stage and everything upstream of it read.
    fn sections(self, cfg: &RunConfig) -> Vec<&'static str> {
        let mut s = vec!["data.", "teacher."];
        match self {
            Stage::Teacher => {}
            Stage::Pairs => s.push("pairs."),
            Stage::Kdm => s.extend(["pairs.", "kdm."]),
            Stage::Eval => s.extend(["pairs.", "kdm.", "eval."]),
            Stage::Theory => s.extend(["pairs.nfe", "theory."]),
            Stage::Sample => {
                if cfg.sample.model == SampleModel::Student {
                    s.extend(["pairs.", "kdm."]);
                } else {
                    s.push("pairs.nfe");
                }
                s.push("sample.");
            }
        }
        s
    }
}

/// `<stage>-s<seed>-<hash>`, where the hash covers every config value the artifact
/// depends on. Thread count and work directory never enter the hash.
pub fn artifact_id(cfg: &RunConfig, stage: Stage) -> String {
    let sections = stage.sections(cfg);
    let mut h = Sha256::new();
    for (key, value) in cfg.entries() {
        if sections.iter().any(|s| key.starts_with(s)) {
            h.update(format!("{key}={value}\n"));
        }
    }
    let digest = hex::encode(h.finalize());
    format!("{}-s{}-{}", stage.name(), stage.seed(cfg), &digest[..16])
}

/// Artifact path with the given suffix, e.g. `.kdmc` or `-log.csv`.
pub fn artifact_path(cfg: &RunConfig, stage: Stage, suffix: &str) -> PathBuf {
    cfg.workdir
        .join(stage.dir())
        .join(format!("{}{suffix}", artifact_id(cfg, stage)))
}

pub fn teacher_checkpoint(cfg: &RunConfig) -> PathBuf {
    artifact_path(cfg, Stage::Teacher, ".kdmc")
}

pub fn pairs_file(cfg: &RunConfig) -> PathBuf {
    artifact_path(cfg, Stage::Pairs, ".kdmp")
}

pub fn kdm_checkpoint(cfg: &RunConfig) -> PathBuf {
    artifact_path(cfg, Stage::Kdm, ".kdmc")
}

/// Errors with the expected path unless `path` exists.
pub fn require(path: &Path, what: &'static str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::MissingInput {
            what,
            path: path.to_path_buf(),
        })
    }
}

/// Writes `bytes`, creating parent directories.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Renders into a buffer with `f` and writes it to `path`.
pub fn write_with<F>(path: &Path, f: F) -> CliResult<()>
where
    F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| CliError::io(path, e))?;
    write_bytes(path, &buf)
}

/// Writes the effective configuration next to a stage's artifacts.
pub fn write_effective_config(cfg: &RunConfig, stage: Stage) -> CliResult<PathBuf> {
    let path = artifact_path(cfg, stage, ".conf");
    write_bytes(&path, cfg.to_text().as_bytes())?;
    Ok(path)
}
