use std::io::Write;

use super::loss::{chunk_pass, disc_loss_grad, LatentNoise, LossSums};
use super::{Discriminator, KdmBatch, KdmLosses, KdmModel, KdmTrainConfig};
use crate::error::{Error, Result};
use crate::exec::map_chunks;
use crate::ndmath::{AdamState, Matrix, Parameters, Rng};
use crate::pairs::PairSet;

/// Rows per gradient chunk; fixed so every execution policy reduces identically.
const GRAD_CHUNK: usize = 128;

/// One row of the training log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    pub iteration: usize,
    pub losses: KdmLosses,
    /// Discriminator loss, `NaN` when training without a discriminator.
    pub disc: f64,
}

#[derive(Clone, Debug)]
pub struct TrainedKdm {
    pub model: KdmModel,
    pub disc: Option<Discriminator>,
    pub log: Vec<LogRow>,
}

/// Trains the student on `pairs` with alternating Adam updates of the model (on the
/// enabled loss terms) and of the discriminator.
///
/// Conditional training uses only labelled pairs; pairs flagged as outside are skipped.
pub fn train_kdm(pairs: &PairSet, cfg: &KdmTrainConfig, rng: &mut Rng) -> Result<TrainedKdm> {
    cfg.validate()?;
    if cfg.conditional && !pairs.meta.conditional {
        return Err(Error::Config("conditional training needs a labelled pair set".into()));
    }
    let usable: Vec<_> = pairs
        .pairs
        .iter()
        .filter(|p| !cfg.conditional || p.label.is_some())
        .collect();
    if usable.is_empty() {
        return Err(Error::Config("no usable training pairs".into()));
    }
    let num_classes = cfg.conditional.then(|| pairs.meta.data_spec.num_cells());
    if let Some(k) = num_classes {
        if let Some(bad) = usable.iter().filter_map(|p| p.label).find(|&l| l >= k) {
            return Err(Error::Config(format!("pair label {bad} out of range for {k} cells")));
        }
    }

    let mut model = KdmModel::new(cfg, num_classes, rng);
    let mut disc = cfg
        .uses_disc()
        .then(|| Discriminator::new(&cfg.disc_hidden, num_classes, rng));
    let mut opt = AdamState::new(&model);
    let mut disc_opt = disc.as_ref().map(AdamState::new);
    let d = cfg.latent_dim;
    let mut log = Vec::with_capacity(cfg.iterations);

    for iteration in 0..cfg.iterations {
        let picked: Vec<_> = (0..cfg.batch).map(|_| usable[rng.below(usable.len())]).collect();
        let batch = KdmBatch::from_pairs(&picked, cfg.conditional)?;
        let noise = LatentNoise::draw(cfg.batch, d, cfg.noise_std, rng);

        let parts = map_chunks(cfg.policy, cfg.batch, GRAD_CHUNK, |r| {
            chunk_pass(&model, disc.as_ref(), &batch, &noise, r, cfg.batch, cfg, true)
        });
        let mut sums = LossSums::default();
        let mut grads: Option<KdmModel> = None;
        let mut fakes: Option<Matrix> = None;
        for part in parts {
            let part = part?;
            sums.add(&part.sums);
            let g = part.grads.expect("gradients requested");
            match grads.as_mut() {
                None => grads = Some(g),
                Some(acc) => acc.add_scaled(&g, 1.0),
            }
            fakes = Some(match fakes {
                None => part.x_pred,
                Some(f) => f.vcat(&part.x_pred)?,
            });
        }
        let losses = sums.finish(cfg.batch, d, cfg, disc.is_some());
        if !losses.total.is_finite() {
            return Err(Error::Divergence {
                iteration,
                what: "kdm loss",
            });
        }
        opt.step(&mut model, &grads.expect("nonempty batch"), cfg.lr)
            .map_err(|e| match e {
                Error::NonFiniteGradient { .. } => Error::Divergence {
                    iteration,
                    what: "kdm gradient",
                },
                other => other,
            })?;

        let mut disc_value = f64::NAN;
        if let (Some(disc), Some(disc_opt), Some(fakes)) = (disc.as_mut(), disc_opt.as_mut(), fakes) {
            let (value, g) = disc_loss_grad(disc, &batch.x_0, &fakes, batch.labels.as_deref())?;
            if !value.is_finite() {
                return Err(Error::Divergence {
                    iteration,
                    what: "discriminator loss",
                });
            }
            disc_opt.step(disc, &g, cfg.lr)?;
            disc_value = value;
        }
        log.push(LogRow {
            iteration,
            losses,
            disc: disc_value,
        });
    }
    Ok(TrainedKdm { model, disc, log })
}

/// CSV with header `iteration,L_rec,L_lat,L_pred,L_adv_gen,L_disc`.
pub fn write_training_log_csv<W: Write>(log: &[LogRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "iteration,L_rec,L_lat,L_pred,L_adv_gen,L_disc")?;
    for row in log {
        let l = &row.losses;
        writeln!(
            out,
            "{},{},{},{},{},{}",
            row.iteration, l.rec, l.lat, l.pred, l.adv_gen, row.disc
        )?;
    }
    Ok(())
}
