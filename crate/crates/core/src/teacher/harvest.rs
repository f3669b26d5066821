use super::Teacher;
use crate::error::{Error, Result};
use crate::exec::{map_chunks, ExecPolicy};
use crate::ndmath::{Matrix, Rng};
use crate::pairs::{NoisePair, PairMeta, PairSet};

/// Pairs integrated together in one batched ODE solve.
const HARVEST_CHUNK: usize = 256;

/// Prior draw `x_T` (and, for a conditional teacher, the requested label) of pair `index`.
///
/// Each pair owns the random substream `(seed, index)`, so a harvest gives the same pairs
/// however it is chunked or scheduled.
pub fn prior_noise(teacher: &Teacher, seed: u64, index: usize) -> ([f64; 2], Option<usize>) {
    let mut rng = Rng::substream(seed, index as u64);
    let std = teacher.prior_std();
    let x_t = [std * rng.normal(), std * rng.normal()];
    let label = teacher.num_classes.map(|k| rng.below(k));
    (x_t, label)
}

/// Draws `n` prior samples, integrates each with `nfe` evaluations and records
/// `(x_T, x_0)`.
///
/// A class-conditional teacher is steered towards a uniformly drawn cell per pair. When
/// `conditional` is set, each pair is labelled with `cell_of(x_0)`; pairs whose output
/// landed outside every occupied cell are kept, flagged and left unlabelled.
pub fn generate_pairs(
    teacher: &Teacher,
    n: usize,
    nfe: usize,
    seed: u64,
    conditional: bool,
    policy: ExecPolicy,
) -> Result<PairSet> {
    if nfe == 0 {
        return Err(Error::Config("nfe must be at least 1".into()));
    }
    let chunks = map_chunks(policy, n, HARVEST_CHUNK, |r| -> Result<Vec<NoisePair>> {
        let draws: Vec<_> = r.clone().map(|i| prior_noise(teacher, seed, i)).collect();
        let x_t = Matrix::from_fn(draws.len(), 2, |i, j| draws[i].0[j]);
        let requested: Option<Vec<usize>> = teacher
            .num_classes
            .map(|_| draws.iter().map(|d| d.1.unwrap_or(0)).collect());
        let x_0 = teacher.end_map(&x_t, nfe, requested.as_deref())?;
        Ok(draws
            .iter()
            .enumerate()
            .map(|(i, (xt, _))| {
                let x0 = [x_0.get(i, 0), x_0.get(i, 1)];
                let (label, outside) = if conditional {
                    let cell = teacher.data_spec.cell_of(x0);
                    (cell, cell.is_none())
                } else {
                    (None, false)
                };
                NoisePair {
                    x_t: *xt,
                    x_0: x0,
                    label,
                    outside,
                }
            })
            .collect())
    });
    let mut pairs = Vec::with_capacity(n);
    for chunk in chunks {
        pairs.extend(chunk?);
    }
    Ok(PairSet {
        pairs,
        meta: PairMeta {
            teacher_kind: teacher.kind,
            nfe,
            seed,
            data_spec: teacher.data_spec,
            conditional,
        },
    })
}
