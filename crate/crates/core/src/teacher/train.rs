use super::{edm_scalings, CheckerboardSpec, SigmaParams, Teacher, TeacherKind, TIME_EMBED_DIM};
use crate::error::{Error, Result};
use crate::exec::{map_chunks, ExecPolicy};
use crate::ndmath::{sinusoidal_embedding, AdamState, Matrix, Mlp, Parameters, Rng};

/// Rows per gradient chunk. Fixed so that sequential and parallel runs reduce the same
/// partial sums in the same order.
const GRAD_CHUNK: usize = 128;

#[derive(Clone, Debug, PartialEq)]
pub struct TeacherConfig {
    pub kind: TeacherKind,
    pub iterations: usize,
    pub batch: usize,
    pub lr: f64,
    /// Hidden layer widths.
    pub hidden: Vec<usize>,
    /// Noise-level range (EDM training law and sampling grid).
    pub sigma: SigmaParams,
    /// Append a one-hot cell label to the network input.
    pub conditional: bool,
    /// Wrap the EDM denoiser in the input/skip/output scalings (see [`edm_scalings`]).
    pub precondition: bool,
    pub policy: ExecPolicy,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        TeacherConfig {
            kind: TeacherKind::Edm,
            iterations: 50_000,
            batch: 512,
            lr: 3e-4,
            hidden: vec![128, 128, 128],
            sigma: SigmaParams::default(),
            conditional: false,
            precondition: true,
            policy: ExecPolicy::Sequential,
        }
    }
}

impl TeacherConfig {
    pub fn validate(&self) -> Result<()> {
        self.sigma.validate()?;
        if self.batch == 0 {
            return Err(Error::Config("teacher batch must be >= 1".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("teacher lr must be positive, got {}", self.lr)));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("teacher hidden widths must be >= 1".into()));
        }
        Ok(())
    }
}

fn one_hot_into(row: &mut Vec<f64>, label: usize, k: usize) {
    row.extend((0..k).map(|j| f64::from(u8::from(j == label))));
}

/// Minimises the mean over the batch of `‖net(input) − target‖²` with Adam. `make_batch`
/// draws one `(input, target)` batch per iteration. Returns the per-iteration losses.
pub(crate) fn fit_regression<F>(
    net: &mut Mlp,
    iterations: usize,
    lr: f64,
    policy: ExecPolicy,
    what: &'static str,
    mut make_batch: F,
) -> Result<Vec<f64>>
where
    F: FnMut() -> (Matrix, Matrix),
{
    let mut adam = AdamState::new(net);
    let mut losses = Vec::with_capacity(iterations);
    for iteration in 0..iterations {
        let (input, target) = make_batch();
        let b = input.rows();
        let model = &*net;
        let parts = map_chunks(policy, b, GRAD_CHUNK, |r| -> Result<(f64, Mlp)> {
            let x = input.select_rows(r.clone());
            let tape = model.forward_tape(&x)?;
            let mut g = tape.output().clone();
            let mut loss = 0.0;
            for (gv, t) in g.data_mut().iter_mut().zip(target.select_rows(r).data()) {
                let e = *gv - t;
                loss += e * e;
                *gv = 2.0 * e / b as f64;
            }
            let mut grads = model.zeros_like();
            model.backward(&tape, &g, &mut grads)?;
            Ok((loss, grads))
        });
        let mut total = 0.0;
        let mut grads: Option<Mlp> = None;
        for part in parts {
            let (loss, g) = part?;
            total += loss;
            match grads.as_mut() {
                None => grads = Some(g),
                Some(acc) => acc.add_scaled(&g, 1.0),
            }
        }
        let loss = total / b as f64;
        if !loss.is_finite() {
            return Err(Error::Divergence { iteration, what });
        }
        losses.push(loss);
        if let Some(g) = grads {
            adam.step(net, &g, lr)?;
        }
    }
    Ok(losses)
}

fn init_net(spec: &CheckerboardSpec, cfg: &TeacherConfig, rng: &mut Rng) -> (Mlp, Option<usize>) {
    let num_classes = cfg.conditional.then(|| spec.num_cells());
    let mut widths = vec![2];
    widths.extend(&cfg.hidden);
    widths.push(2);
    let net = Mlp::new(&widths, TIME_EMBED_DIM + num_classes.unwrap_or(0), rng);
    (net, num_classes)
}

/// Trains the teacher selected by `cfg.kind` and returns it with its per-iteration losses.
pub fn train_teacher(spec: &CheckerboardSpec, cfg: &TeacherConfig, rng: &mut Rng) -> Result<(Teacher, Vec<f64>)> {
    spec.validate()?;
    cfg.validate()?;
    let (mut net, num_classes) = init_net(spec, cfg, rng);
    let k = num_classes.unwrap_or(0);
    let width = net.in_width();
    let sigma = cfg.sigma;
    let (ln_lo, ln_hi) = (sigma.sigma_min.ln(), sigma.sigma_max.ln());
    let sigma_data = spec.marginal_std();

    let losses = match cfg.kind {
        TeacherKind::Edm => fit_regression(&mut net, cfg.iterations, cfg.lr, cfg.policy, "denoiser loss", || {
            let mut input = Vec::with_capacity(cfg.batch * width);
            let mut target = Vec::with_capacity(cfg.batch * 2);
            for _ in 0..cfg.batch {
                let (x0, cell) = spec.sample_one(rng);
                let ln_sigma = rng.uniform_in(ln_lo, ln_hi);
                let s = ln_sigma.exp();
                let x = [x0[0] + s * rng.normal(), x0[1] + s * rng.normal()];
                if cfg.precondition {
                    // The network regresses the scaled residual so that
                    // c_skip·x + c_out·F(c_in·x) is the denoised estimate.
                    let c = edm_scalings(s, sigma_data);
                    input.extend(x.map(|v| c.c_in * v));
                    target.extend([0, 1].map(|j| (x0[j] - c.c_skip * x[j]) / c.c_out));
                } else {
                    input.extend(x);
                    target.extend(x0);
                }
                input.extend(sinusoidal_embedding(ln_sigma / 4.0, TIME_EMBED_DIM));
                if num_classes.is_some() {
                    one_hot_into(&mut input, cell, k);
                }
            }
            (
                Matrix::from_vec(cfg.batch, width, input).expect("batch shape"),
                Matrix::from_vec(cfg.batch, 2, target).expect("batch shape"),
            )
        })?,
        TeacherKind::FlowMatching => {
            fit_regression(&mut net, cfg.iterations, cfg.lr, cfg.policy, "velocity loss", || {
                let mut input = Vec::with_capacity(cfg.batch * width);
                let mut target = Vec::with_capacity(cfg.batch * 2);
                for _ in 0..cfg.batch {
                    let (x0, cell) = spec.sample_one(rng);
                    let x1 = [rng.normal(), rng.normal()];
                    let t = rng.uniform();
                    input.push((1.0 - t) * x0[0] + t * x1[0]);
                    input.push((1.0 - t) * x0[1] + t * x1[1]);
                    input.extend(sinusoidal_embedding(t, TIME_EMBED_DIM));
                    if num_classes.is_some() {
                        one_hot_into(&mut input, cell, k);
                    }
                    target.push(x1[0] - x0[0]);
                    target.push(x1[1] - x0[1]);
                }
                (
                    Matrix::from_vec(cfg.batch, width, input).expect("batch shape"),
                    Matrix::from_vec(cfg.batch, 2, target).expect("batch shape"),
                )
            })?
        }
    };
    let teacher = Teacher {
        kind: cfg.kind,
        net,
        sigma,
        data_spec: *spec,
        num_classes,
        precondition: cfg.precondition && cfg.kind == TeacherKind::Edm,
    };
    Ok((teacher, losses))
}

/// Denoiser teacher trained on `E‖D(x₀ + σε; σ) − x₀‖²` with σ log-uniform on
/// `[σ_min, σ_max]`.
pub fn train_teacher_edm(spec: &CheckerboardSpec, cfg: &TeacherConfig, rng: &mut Rng) -> Result<Teacher> {
    let cfg = TeacherConfig {
        kind: TeacherKind::Edm,
        ..cfg.clone()
    };
    Ok(train_teacher(spec, &cfg, rng)?.0)
}

/// Velocity teacher trained on `E‖v(x_t, t) − (x₁ − x₀)‖²` along
/// `x_t = (1 − t)x₀ + t·x₁`, `x₁ ~ N(0, I)`.
pub fn train_teacher_fm(spec: &CheckerboardSpec, cfg: &TeacherConfig, rng: &mut Rng) -> Result<Teacher> {
    let cfg = TeacherConfig {
        kind: TeacherKind::FlowMatching,
        ..cfg.clone()
    };
    Ok(train_teacher(spec, &cfg, rng)?.0)
}
