//! Noise→data pair sets, their binary container, model checkpoints and train/validation
//! splitting.

mod checkpoint;
mod container;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, NamedTensor};
pub use container::{decode_pairs, encode_pairs, load_pairs, save_pairs, write_pairs_csv};

use crate::error::{Error, Result};
use crate::ndmath::Rng;
use crate::teacher::{CheckerboardSpec, TeacherKind};

/// One harvested pair: a prior sample and the teacher's output for it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoisePair {
    pub x_t: [f64; 2],
    pub x_0: [f64; 2],
    /// Occupied cell of `x_0` in a labelled set; `None` in unlabelled sets and for
    /// outside pairs.
    pub label: Option<usize>,
    /// `x_0` fell outside every occupied cell (labelled sets only).
    pub outside: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairMeta {
    pub teacher_kind: TeacherKind,
    pub nfe: usize,
    pub seed: u64,
    pub data_spec: CheckerboardSpec,
    /// Pairs carry cell labels.
    pub conditional: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairSet {
    pub pairs: Vec<NoisePair>,
    pub meta: PairMeta,
}

impl PairSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Checks the labelling and finiteness invariants.
    pub fn validate(&self) -> Result<()> {
        if self.meta.nfe == 0 {
            return Err(Error::Config("pair set nfe must be >= 1".into()));
        }
        for (i, p) in self.pairs.iter().enumerate() {
            if !p.x_t.iter().chain(&p.x_0).all(|v| v.is_finite()) {
                return Err(crate::FormatError::NonFinite(i).into());
            }
            let consistent = if self.meta.conditional {
                p.outside == p.label.is_none()
            } else {
                p.label.is_none() && !p.outside
            };
            if !consistent {
                return Err(Error::Config(format!("pair {i} breaks the set's labelling")));
            }
        }
        Ok(())
    }

    /// Fraction of pairs flagged as outside.
    pub fn outside_fraction(&self) -> f64 {
        if self.pairs.is_empty() {
            return 0.0;
        }
        self.pairs.iter().filter(|p| p.outside).count() as f64 / self.pairs.len() as f64
    }

    fn with_pairs(&self, pairs: Vec<NoisePair>) -> PairSet {
        PairSet { pairs, meta: self.meta }
    }
}

/// Seed-deterministic shuffle split into `round(n · train_fraction)` training pairs and
/// the rest for validation.
pub fn split(set: &PairSet, train_fraction: f64, seed: u64) -> Result<(PairSet, PairSet)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n = set.pairs.len();
    let mut order: Vec<usize> = (0..n).collect();
    Rng::new(seed).shuffle(&mut order);
    let n_train = (n as f64 * train_fraction).round() as usize;
    let pick = |idx: &[usize]| idx.iter().map(|&i| set.pairs[i]).collect();
    Ok((set.with_pairs(pick(&order[..n_train])), set.with_pairs(pick(&order[n_train..]))))
}
