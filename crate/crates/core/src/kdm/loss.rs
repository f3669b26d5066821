use std::ops::Range;

use super::{conditioned, one_hot, Discriminator, KdmModel, KdmTrainConfig, CLEAN_MARKER, NOISY_MARKER};
use crate::error::{shape_err, Error, Result};
use crate::ndmath::{gemm, Matrix, Parameters, Rng};
use crate::pairs::NoisePair;

/// A training batch in matrix form.
#[derive(Clone, Debug, PartialEq)]
pub struct KdmBatch {
    pub x_t: Matrix,
    pub x_0: Matrix,
    pub labels: Option<Vec<usize>>,
}

impl KdmBatch {
    /// Stacks pairs into a batch. With `conditional` every pair must carry a label.
    pub fn from_pairs(pairs: &[&NoisePair], conditional: bool) -> Result<Self> {
        let x_t = Matrix::from_fn(pairs.len(), 2, |i, j| pairs[i].x_t[j]);
        let x_0 = Matrix::from_fn(pairs.len(), 2, |i, j| pairs[i].x_0[j]);
        let labels = if conditional {
            Some(
                pairs
                    .iter()
                    .map(|p| p.label.ok_or_else(|| Error::Config("conditional batch contains an unlabelled pair".into())))
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };
        Ok(KdmBatch { x_t, x_0, labels })
    }

    pub fn len(&self) -> usize {
        self.x_t.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Loss values of one batch. `total` only includes the enabled terms.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KdmLosses {
    pub rec: f64,
    pub lat: f64,
    pub pred: f64,
    pub adv_gen: f64,
    pub total: f64,
}

/// Latent noise of one batch.
pub(crate) struct LatentNoise {
    pub eps_0: Matrix,
    pub eps_t: Matrix,
}

impl LatentNoise {
    pub fn draw(n: usize, d: usize, std: f64, rng: &mut Rng) -> Self {
        let mut eps_0 = Matrix::zeros(n, d);
        let mut eps_t = Matrix::zeros(n, d);
        rng.fill_normal(eps_0.data_mut(), std);
        rng.fill_normal(eps_t.data_mut(), std);
        LatentNoise { eps_0, eps_t }
    }
}

/// Unnormalised loss sums of one chunk of a batch.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct LossSums {
    pub rec: f64,
    pub lat: f64,
    pub pred: f64,
    pub adv: f64,
}

impl LossSums {
    pub fn add(&mut self, o: &LossSums) {
        self.rec += o.rec;
        self.lat += o.lat;
        self.pred += o.pred;
        self.adv += o.adv;
    }

    /// Batch means and the enabled total, summed in a fixed order.
    pub fn finish(&self, n: usize, d: usize, cfg: &KdmTrainConfig, has_disc: bool) -> KdmLosses {
        let n = n as f64;
        let rec = self.rec / (2.0 * n);
        let lat = self.lat / (d as f64 * n);
        let pred = self.pred / (2.0 * n);
        let adv_gen = if has_disc { self.adv / n } else { 0.0 };
        let t = cfg.toggles;
        let on = |flag: bool, v: f64| if flag { v } else { 0.0 };
        let mut total = 0.0;
        total += on(t.rec, rec);
        total += on(t.lat, lat);
        total += on(t.pred, pred);
        total += on(t.adv && has_disc, cfg.lambda_adv * adv_gen);
        KdmLosses {
            rec,
            lat,
            pred,
            adv_gen,
            total,
        }
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Result of a forward (and optionally backward) pass over one chunk.
pub(crate) struct ChunkPass {
    pub sums: LossSums,
    pub grads: Option<KdmModel>,
    /// Decoded predictions `D(C z̃_T [+ C_μ c])`, the discriminator's fakes.
    pub x_pred: Matrix,
}

fn sub_labels(labels: &Option<Vec<usize>>, rows: &Range<usize>) -> Option<Vec<usize>> {
    labels.as_ref().map(|l| l[rows.clone()].to_vec())
}

/// Training forward pass over `rows` of the batch; with `want_grads`, the reverse pass
/// of the enabled terms, each scaled for a batch of `total_rows`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn chunk_pass(
    model: &KdmModel,
    disc: Option<&Discriminator>,
    batch: &KdmBatch,
    noise: &LatentNoise,
    rows: Range<usize>,
    total_rows: usize,
    cfg: &KdmTrainConfig,
    want_grads: bool,
) -> Result<ChunkPass> {
    let d = model.latent_dim();
    let n = rows.len();
    let bsz = total_rows as f64;
    let toggles = cfg.toggles;
    let x_t = batch.x_t.select_rows(rows.clone());
    let x_0 = batch.x_0.select_rows(rows.clone());
    let labels = sub_labels(&batch.labels, &rows);
    let onehot = model.onehot_for(n, labels.as_deref())?;
    let oh = onehot.as_ref();

    let tape_c = model.enc_clean.forward_tape(&conditioned(&x_0, CLEAN_MARKER, oh))?;
    let tape_n = model.enc_noisy.forward_tape(&conditioned(&x_t, NOISY_MARKER, oh))?;
    let z_0 = tape_c.output();
    let mut zn_0 = z_0.clone();
    zn_0.add_assign(&noise.eps_0.select_rows(rows.clone()));
    let mut zn_t = tape_n.output().clone();
    zn_t.add_assign(&noise.eps_t.select_rows(rows.clone()));

    let (mut z_push, k_tape) = model.koopman.apply_tape(&zn_t)?;
    if let (Some(c), Some(h)) = (&model.control, oh) {
        gemm(1.0, h, false, c, false, 1.0, &mut z_push);
    }
    let z_rec = if toggles.rec_noise_free { z_0 } else { &zn_0 };
    let tape_rec = model.dec.forward_tape(&conditioned(z_rec, CLEAN_MARKER, oh))?;
    let tape_pred = model.dec.forward_tape(&conditioned(&z_push, CLEAN_MARKER, oh))?;
    let x_rec = tape_rec.output();
    let x_pred = tape_pred.output();

    let mut sums = LossSums::default();
    let mut g_rec = Matrix::zeros(n, 2);
    let mut g_pred = Matrix::zeros(n, 2);
    for i in 0..n * 2 {
        let target = x_0.data()[i];
        let er = x_rec.data()[i] - target;
        let ep = x_pred.data()[i] - target;
        sums.rec += er * er;
        sums.pred += ep * ep;
        if toggles.rec {
            g_rec.data_mut()[i] = er / bsz;
        }
        if toggles.pred {
            g_pred.data_mut()[i] = ep / bsz;
        }
    }
    let mut g_push_lat = Matrix::zeros(n, d);
    let mut g_z0 = Matrix::zeros(n, d);
    let lat_scale = 2.0 / (d as f64 * bsz);
    for i in 0..n * d {
        let diff = z_0.data()[i] - z_push.data()[i];
        sums.lat += diff * diff;
        if toggles.lat {
            g_z0.data_mut()[i] = lat_scale * diff;
            g_push_lat.data_mut()[i] = -lat_scale * diff;
        }
    }

    let mut disc_tape = None;
    if let Some(disc) = disc {
        let tape = disc.net.forward_tape(&disc.input(x_pred, oh)?)?;
        sums.adv = tape.output().data().iter().map(|&l| softplus(-l)).sum();
        disc_tape = Some(tape);
    }

    if !want_grads {
        return Ok(ChunkPass {
            sums,
            grads: None,
            x_pred: x_pred.clone(),
        });
    }

    let mut grads = model.zeros_like();
    if let (Some(disc), Some(tape), true) = (disc, &disc_tape, toggles.adv) {
        // d/dl mean softplus(−l) = −σ(−l) / B
        let g_logit = Matrix::from_vec(
            n,
            1,
            tape.output()
                .data()
                .iter()
                .map(|&l| -cfg.lambda_adv * sigmoid(-l) / bsz)
                .collect(),
        )?;
        let mut scratch = disc.net.zeros_like();
        let g_in = disc.net.backward(tape, &g_logit, &mut scratch)?;
        for i in 0..n {
            for j in 0..2 {
                g_pred.set(i, j, g_pred.get(i, j) + g_in.get(i, j));
            }
        }
    }

    let mut g_push = model.dec.backward(&tape_pred, &g_pred, &mut grads.dec)?.select_cols(0..d);
    g_push.add_assign(&g_push_lat);
    if toggles.rec {
        let g_zrec = model.dec.backward(&tape_rec, &g_rec, &mut grads.dec)?.select_cols(0..d);
        // Additive latent noise passes gradients straight through.
        g_z0.add_assign(&g_zrec);
    }
    if let (Some(gc), Some(h)) = (grads.control.as_mut(), oh) {
        gemm(1.0, h, true, &g_push, false, 1.0, gc);
    }
    let g_zt = model.koopman.backward(&zn_t, k_tape.as_ref(), &g_push, &mut grads.koopman)?;
    model.enc_noisy.backward(&tape_n, &g_zt, &mut grads.enc_noisy)?;
    model.enc_clean.backward(&tape_c, &g_z0, &mut grads.enc_clean)?;

    Ok(ChunkPass {
        sums,
        grads: Some(grads),
        x_pred: x_pred.clone(),
    })
}

fn check_disc(disc: Option<&Discriminator>, cfg: &KdmTrainConfig) -> Result<()> {
    if disc.is_some() != cfg.uses_disc() {
        return Err(Error::Config(
            "a discriminator is required exactly when the adversarial term is active".into(),
        ));
    }
    Ok(())
}

/// Losses of one batch: encode, inject latent noise (standard deviation `cfg.noise_std`),
/// push through the Koopman operator (plus control offset), decode, and score the pushed
/// decodes with the discriminator.
pub fn kdm_losses(
    model: &KdmModel,
    batch: &KdmBatch,
    disc: Option<&Discriminator>,
    cfg: &KdmTrainConfig,
    rng: &mut Rng,
) -> Result<KdmLosses> {
    Ok(kdm_losses_grads(model, batch, disc, cfg, rng, false)?.0)
}

pub(crate) fn kdm_losses_grads(
    model: &KdmModel,
    batch: &KdmBatch,
    disc: Option<&Discriminator>,
    cfg: &KdmTrainConfig,
    rng: &mut Rng,
    want_grads: bool,
) -> Result<(KdmLosses, Option<KdmModel>, Matrix)> {
    if batch.is_empty() {
        return Err(Error::Config("kdm batch is empty".into()));
    }
    check_disc(disc, cfg)?;
    let noise = LatentNoise::draw(batch.len(), model.latent_dim(), cfg.noise_std, rng);
    let pass = chunk_pass(model, disc, batch, &noise, 0..batch.len(), batch.len(), cfg, want_grads)?;
    let losses = pass.sums.finish(batch.len(), model.latent_dim(), cfg, disc.is_some());
    if !losses.total.is_finite() {
        return Err(Error::Divergence {
            iteration: 0,
            what: "kdm loss",
        });
    }
    Ok((losses, pass.grads, pass.x_pred))
}

impl Parameters for Discriminator {
    fn params(&self) -> Vec<&[f64]> {
        self.net.params()
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.net.params_mut()
    }

    fn param_names(&self) -> Vec<String> {
        self.net.param_names()
    }
}

fn disc_labels(disc: &Discriminator, labels: Option<&[usize]>, n: usize) -> Result<Option<Matrix>> {
    match (disc.num_classes(), labels) {
        (Some(k), Some(l)) if l.len() == n => Ok(Some(one_hot(l, k))),
        (Some(_), Some(l)) => Err(shape_err("discriminator labels", n, l.len())),
        (Some(_), None) => Err(Error::Config("conditional discriminator needs labels".into())),
        (None, _) => Ok(None),
    }
}

/// `mean softplus(−D(real)) + mean softplus(D(fake))` and its gradient with respect to
/// the discriminator parameters. Fakes are constants here.
pub fn disc_loss_grad(
    disc: &Discriminator,
    real: &Matrix,
    fake: &Matrix,
    labels: Option<&[usize]>,
) -> Result<(f64, Discriminator)> {
    if real.rows() == 0 || fake.rows() == 0 {
        return Err(Error::Config("discriminator batches must be nonempty".into()));
    }
    if labels.is_some() && real.rows() != fake.rows() {
        return Err(shape_err("discriminator fake batch", real.rows(), fake.rows()));
    }
    let mut grads = Discriminator {
        net: disc.net.zeros_like(),
    };
    let mut loss = 0.0;
    for (x, sign) in [(real, 1.0), (fake, -1.0)] {
        let n = x.rows() as f64;
        let oh = disc_labels(disc, labels, x.rows())?;
        let tape = disc.net.forward_tape(&disc.input(x, oh.as_ref())?)?;
        let logits = tape.output().data();
        // real: softplus(−l), d/dl = −σ(−l); fake: softplus(l), d/dl = σ(l)
        loss += logits.iter().map(|&l| softplus(-sign * l)).sum::<f64>() / n;
        let g = Matrix::from_vec(
            logits.len(),
            1,
            logits.iter().map(|&l| -sign * sigmoid(-sign * l) / n).collect(),
        )?;
        disc.net.backward(&tape, &g, &mut grads.net)?;
    }
    Ok((loss, grads))
}

/// Discriminator cross-entropy: real points labelled 1, fakes labelled 0.
pub fn disc_loss(disc: &Discriminator, real: &Matrix, fake: &Matrix, labels: Option<&[usize]>) -> Result<f64> {
    Ok(disc_loss_grad(disc, real, fake, labels)?.0)
}
