//! The one-step student: encoders into a latent space, a linear Koopman push, an optional
//! per-class control offset, a decoder, and the adversarial discriminator used in training.

mod koopman;
mod loss;
mod train;

pub use koopman::{eigen_modulus, koopman_apply, koopman_eigenvalues, KoopmanOperator, OperatorKind};
pub use loss::{disc_loss, disc_loss_grad, kdm_losses, KdmBatch, KdmLosses};
pub use train::{train_kdm, write_training_log_csv, LogRow, TrainedKdm};

use crate::error::{shape_err, Error, Result};
use crate::exec::ExecPolicy;
use crate::ndmath::{Matrix, Mlp, Parameters, Rng};
use crate::pairs::Checkpoint;

/// Time-marker fed to the noisy-input encoder.
pub const NOISY_MARKER: f64 = 1.0;
/// Time-marker fed to the clean-input encoder and the decoder.
pub const CLEAN_MARKER: f64 = 0.0;

/// Individual loss terms that can be switched off for ablations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LossToggles {
    pub rec: bool,
    pub lat: bool,
    pub pred: bool,
    pub adv: bool,
    /// Reconstruct from the clean latent `z_0` instead of the noise-injected one.
    pub rec_noise_free: bool,
}

impl Default for LossToggles {
    fn default() -> Self {
        LossToggles {
            rec: true,
            lat: true,
            pred: true,
            adv: true,
            rec_noise_free: false,
        }
    }
}

impl LossToggles {
    pub fn pred_only() -> Self {
        LossToggles {
            rec: false,
            lat: false,
            pred: true,
            adv: false,
            rec_noise_free: false,
        }
    }

    pub fn none() -> Self {
        LossToggles {
            rec: false,
            lat: false,
            pred: false,
            adv: false,
            rec_noise_free: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KdmTrainConfig {
    pub iterations: usize,
    pub batch: usize,
    pub lr: f64,
    pub lambda_adv: f64,
    /// Standard deviation of the Gaussian noise added to latents during training.
    pub noise_std: f64,
    pub latent_dim: usize,
    pub conditional: bool,
    pub operator: OperatorKind,
    pub toggles: LossToggles,
    pub seed: u64,
    /// Hidden widths of the encoders and the decoder.
    pub hidden: Vec<usize>,
    pub disc_hidden: Vec<usize>,
    pub policy: ExecPolicy,
}

impl Default for KdmTrainConfig {
    fn default() -> Self {
        KdmTrainConfig {
            iterations: 20_000,
            batch: 256,
            lr: 3e-4,
            lambda_adv: 0.01,
            noise_std: 0.4,
            latent_dim: 64,
            conditional: false,
            operator: OperatorKind::Dense,
            toggles: LossToggles::default(),
            seed: 0,
            hidden: vec![128, 128],
            disc_hidden: vec![64, 64],
            policy: ExecPolicy::Sequential,
        }
    }
}

impl KdmTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_adv >= 0.0) {
            return Err(Error::Config(format!("lambda_adv must be >= 0, got {}", self.lambda_adv)));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::Config(format!("noise_std must be >= 0, got {}", self.noise_std)));
        }
        if self.latent_dim == 0 {
            return Err(Error::Config("latent_dim must be >= 1".into()));
        }
        if self.batch == 0 {
            return Err(Error::Config("kdm batch must be >= 1".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("kdm lr must be positive, got {}", self.lr)));
        }
        Ok(())
    }

    /// Whether training keeps a discriminator.
    pub fn uses_disc(&self) -> bool {
        self.lambda_adv > 0.0 && self.toggles.adv
    }
}

/// The student model.
#[derive(Clone, Debug, PartialEq)]
pub struct KdmModel {
    /// Encoder of clean samples `x_0`.
    pub enc_clean: Mlp,
    /// Encoder of prior samples `x_T`.
    pub enc_noisy: Mlp,
    pub koopman: KoopmanOperator,
    /// Per-class latent offsets (`k × d`), present for conditional models.
    pub control: Option<Matrix>,
    pub dec: Mlp,
}

fn widths(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut w = vec![input];
    w.extend(hidden);
    w.push(output);
    w
}

/// `[x | marker | one-hot(label)]` rows.
pub(crate) fn conditioned(x: &Matrix, marker: f64, onehot: Option<&Matrix>) -> Matrix {
    let with_marker = x.hcat_row(&[marker]);
    match onehot {
        Some(h) => with_marker.hcat(h).expect("one-hot rows match batch"),
        None => with_marker,
    }
}

pub(crate) fn one_hot(labels: &[usize], k: usize) -> Matrix {
    Matrix::from_fn(labels.len(), k, |i, j| f64::from(u8::from(labels[i] == j)))
}

impl KdmModel {
    /// Freshly initialised student for 2D data. The Koopman operator starts at the
    /// identity (dense) or at `P = P⁻¹ = I` with moduli 0.9 (factorised); control offsets
    /// start at zero.
    pub fn new(cfg: &KdmTrainConfig, num_classes: Option<usize>, rng: &mut Rng) -> Self {
        let d = cfg.latent_dim;
        let embed = 1 + num_classes.unwrap_or(0);
        let enc_clean = Mlp::new(&widths(2, &cfg.hidden, d), embed, rng);
        let enc_noisy = Mlp::new(&widths(2, &cfg.hidden, d), embed, rng);
        let dec = Mlp::new(&widths(d, &cfg.hidden, 2), embed, rng);
        KdmModel {
            enc_clean,
            enc_noisy,
            koopman: KoopmanOperator::identity_like(cfg.operator, d, 0.9),
            control: num_classes.map(|k| Matrix::zeros(k, d)),
            dec,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.koopman.dim()
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.control.as_ref().map(Matrix::rows)
    }

    pub(crate) fn onehot_for(&self, n: usize, labels: Option<&[usize]>) -> Result<Option<Matrix>> {
        match (self.num_classes(), labels) {
            (None, None) => Ok(None),
            (Some(k), Some(l)) => {
                if l.len() != n {
                    return Err(shape_err("student labels", n, l.len()));
                }
                if let Some(bad) = l.iter().find(|&&c| c >= k) {
                    return Err(Error::Config(format!("label {bad} out of range for {k} classes")));
                }
                Ok(Some(one_hot(l, k)))
            }
            (None, Some(_)) => Err(Error::Config("unconditional student given a label".into())),
            (Some(_), None) => Err(Error::Config("conditional student needs a label".into())),
        }
    }

    /// One-step generation for a batch of prior samples: decode the Koopman push of the
    /// encoded noise, plus the control offset when conditional. No randomness.
    pub fn sample_batch(&self, x_t: &Matrix, labels: Option<&[usize]>) -> Result<Matrix> {
        if x_t.cols() != 2 {
            return Err(shape_err("student input", 2, x_t.cols()));
        }
        let onehot = self.onehot_for(x_t.rows(), labels)?;
        let z_t = self.enc_noisy.forward_batch(&conditioned(x_t, NOISY_MARKER, onehot.as_ref()))?;
        let mut z = self.koopman.apply_batch(&z_t)?;
        if let (Some(c), Some(h)) = (&self.control, &onehot) {
            z.add_assign(&h.matmul(c)?);
        }
        self.dec.forward_batch(&conditioned(&z, CLEAN_MARKER, onehot.as_ref()))
    }

    pub fn zeros_like(&self) -> Self {
        KdmModel {
            enc_clean: self.enc_clean.zeros_like(),
            enc_noisy: self.enc_noisy.zeros_like(),
            koopman: self.koopman.zeros_like(),
            control: self.control.as_ref().map(|c| Matrix::zeros(c.rows(), c.cols())),
            dec: self.dec.zeros_like(),
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        ck.set_meta("model", "kdm");
        ck.set_meta("operator", self.koopman.kind());
        ck.set_meta("latent_dim", self.latent_dim());
        ck.set_meta("num_classes", self.num_classes().unwrap_or(0));
        ck.push_mlp("enc_clean", &self.enc_clean);
        ck.push_mlp("enc_noisy", &self.enc_noisy);
        ck.push_mlp("dec", &self.dec);
        for (name, p) in self.koopman.param_names().iter().zip(self.koopman.params()) {
            ck.push_vector(format!("koopman.{name}"), p);
        }
        if let Some(c) = &self.control {
            ck.push_matrix("control", c);
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.meta("model") != Some("kdm") {
            return Err(crate::FormatError::Malformed("checkpoint does not hold a kdm model".into()).into());
        }
        let d: usize = ck.meta_parse("latent_dim")?;
        let k: usize = ck.meta_parse("num_classes")?;
        let mut koopman = KoopmanOperator::identity_like(ck.meta_parse("operator")?, d, 0.5);
        let names = koopman.param_names();
        for (name, dst) in names.iter().zip(koopman.params_mut()) {
            let src = ck.vector(&format!("koopman.{name}"))?;
            if src.len() != dst.len() {
                return Err(shape_err("koopman tensor", dst.len(), src.len()));
            }
            dst.copy_from_slice(&src);
        }
        let model = KdmModel {
            enc_clean: ck.mlp("enc_clean")?,
            enc_noisy: ck.mlp("enc_noisy")?,
            koopman,
            control: if k > 0 { Some(ck.matrix("control")?) } else { None },
            dec: ck.mlp("dec")?,
        };
        let embed = 1 + k;
        let consistent = model.enc_clean.out_dim() == d
            && model.enc_noisy.out_dim() == d
            && model.dec.input_dim() == d
            && [&model.enc_clean, &model.enc_noisy, &model.dec]
                .iter()
                .all(|m| m.embed_dim() == embed)
            && model.control.as_ref().is_none_or(|c| c.shape() == (k, d));
        if !consistent {
            return Err(crate::FormatError::Malformed("kdm model shapes are inconsistent".into()).into());
        }
        Ok(model)
    }
}

impl Parameters for KdmModel {
    fn params(&self) -> Vec<&[f64]> {
        let mut p = self.enc_clean.params();
        p.extend(self.enc_noisy.params());
        p.extend(self.koopman.params());
        if let Some(c) = &self.control {
            p.push(c.data());
        }
        p.extend(self.dec.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = self.enc_clean.params_mut();
        p.extend(self.enc_noisy.params_mut());
        p.extend(self.koopman.params_mut());
        if let Some(c) = &mut self.control {
            p.push(c.data_mut());
        }
        p.extend(self.dec.params_mut());
        p
    }

    fn param_names(&self) -> Vec<String> {
        let prefixed = |prefix: &str, names: Vec<String>| -> Vec<String> {
            names.into_iter().map(|n| format!("{prefix}.{n}")).collect()
        };
        let mut n = prefixed("enc_clean", self.enc_clean.param_names());
        n.extend(prefixed("enc_noisy", self.enc_noisy.param_names()));
        n.extend(prefixed("koopman", self.koopman.param_names()));
        if self.control.is_some() {
            n.push("control".into());
        }
        n.extend(prefixed("dec", self.dec.param_names()));
        n
    }
}

/// Discriminator: an MLP from a 2D point (plus one-hot label when conditional) to one logit.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    pub net: Mlp,
}

impl Discriminator {
    pub fn new(hidden: &[usize], num_classes: Option<usize>, rng: &mut Rng) -> Self {
        Discriminator {
            net: Mlp::new(&widths(2, hidden, 1), num_classes.unwrap_or(0), rng),
        }
    }

    pub fn num_classes(&self) -> Option<usize> {
        let k = self.net.embed_dim();
        (k > 0).then_some(k)
    }

    pub(crate) fn input(&self, x: &Matrix, onehot: Option<&Matrix>) -> Result<Matrix> {
        match (self.num_classes(), onehot) {
            (None, _) => Ok(x.clone()),
            (Some(_), Some(h)) => x.hcat(h),
            (Some(_), None) => Err(Error::Config("conditional discriminator needs labels".into())),
        }
    }

    /// Logits for a batch of points.
    pub fn logits(&self, x: &Matrix, onehot: Option<&Matrix>) -> Result<Vec<f64>> {
        Ok(self.net.forward_batch(&self.input(x, onehot)?)?.into_vec())
    }
}

/// One-step sample for a single prior point.
pub fn sample_one_step(model: &KdmModel, x_t: [f64; 2], label: Option<usize>) -> Result<[f64; 2]> {
    let labels = label.map(|l| [l]);
    let out = model.sample_batch(&Matrix::from_vec(1, 2, x_t.to_vec())?, labels.as_ref().map(|l| &l[..]))?;
    Ok([out.get(0, 0), out.get(0, 1)])
}
