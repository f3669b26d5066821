//! Checkerboard data, EDM-style and flow-matching teachers, deterministic ODE sampling and
//! noise→data pair harvesting.

mod checkerboard;
mod harvest;
mod ode;
mod schedule;
mod train;

pub use checkerboard::{sample_checkerboard, CheckerboardSpec};
pub use harvest::{generate_pairs, prior_noise};
pub use ode::{edm_levels_for_nfe, fm_steps_for_nfe, integrate_edm, integrate_fm, OdeSolution};
pub use schedule::{karras_grid, SigmaParams, SigmaSchedule};
pub use train::{train_teacher, train_teacher_edm, train_teacher_fm, TeacherConfig};

use std::fmt;
use std::str::FromStr;

use crate::error::{shape_err, Error, Result};
use crate::ndmath::{sinusoidal_embedding, Matrix, Mlp};
use crate::pairs::Checkpoint;

/// Width of the sinusoidal noise-level / time embedding.
pub const TIME_EMBED_DIM: usize = 16;

/// What the teacher network predicts, which fixes how it is sampled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TeacherKind {
    /// Denoiser `D(x; σ)` integrated along a Karras noise grid.
    Edm,
    /// Velocity field `v(x, t)` integrated from `t = 1` (prior) to `t = 0` (data).
    FlowMatching,
}

impl TeacherKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TeacherKind::Edm => "edm",
            TeacherKind::FlowMatching => "fm",
        }
    }
}

impl fmt::Display for TeacherKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TeacherKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "edm" => Ok(TeacherKind::Edm),
            "fm" => Ok(TeacherKind::FlowMatching),
            other => Err(Error::Config(format!("unknown teacher kind {other:?} (expected edm or fm)"))),
        }
    }
}

/// A trained (or freshly initialised) teacher.
///
/// The network consumes `[x | time embedding | one-hot label]`, the label block being
/// present only for class-conditional teachers.
#[derive(Clone, Debug, PartialEq)]
pub struct Teacher {
    pub kind: TeacherKind,
    pub net: Mlp,
    pub sigma: SigmaParams,
    pub data_spec: CheckerboardSpec,
    /// Number of label classes for a conditional teacher.
    pub num_classes: Option<usize>,
    /// EDM only: the network is wrapped as `c_skip·x + c_out·F(c_in·x)`.
    pub precondition: bool,
}

/// EDM denoiser scalings for noise level `sigma` and data standard deviation `sigma_data`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdmScalings {
    pub c_skip: f64,
    pub c_out: f64,
    pub c_in: f64,
}

/// `c_skip = σ_d²/(σ² + σ_d²)`, `c_out = σ·σ_d/√(σ² + σ_d²)`, `c_in = 1/√(σ² + σ_d²)`:
/// unit-variance network inputs and targets at every noise level, and an identity skip
/// path that makes low-noise denoising trivial.
pub fn edm_scalings(sigma: f64, sigma_data: f64) -> EdmScalings {
    let total = sigma * sigma + sigma_data * sigma_data;
    let root = total.sqrt();
    EdmScalings {
        c_skip: sigma_data * sigma_data / total,
        c_out: sigma * sigma_data / root,
        c_in: 1.0 / root,
    }
}

impl Teacher {
    pub fn state_dim(&self) -> usize {
        self.net.input_dim()
    }

    /// Standard deviation of the isotropic Gaussian the sampler starts from.
    pub fn prior_std(&self) -> f64 {
        match self.kind {
            TeacherKind::Edm => self.sigma.sigma_max,
            TeacherKind::FlowMatching => 1.0,
        }
    }

    /// Scalar fed to the sinusoidal embedding for noise level σ (EDM) or time t (FM).
    pub fn level_feature(&self, level: f64) -> f64 {
        match self.kind {
            TeacherKind::Edm => level.ln() / 4.0,
            TeacherKind::FlowMatching => level,
        }
    }

    fn check_labels(&self, n: usize, labels: Option<&[usize]>) -> Result<()> {
        match (self.num_classes, labels) {
            (None, None) => Ok(()),
            (Some(k), Some(l)) => {
                if l.len() != n {
                    return Err(shape_err("teacher labels", n, l.len()));
                }
                if let Some(bad) = l.iter().find(|&&c| c >= k) {
                    return Err(Error::Config(format!("label {bad} out of range for {k} classes")));
                }
                Ok(())
            }
            (None, Some(_)) => Err(Error::Config("unconditional teacher given labels".into())),
            (Some(_), None) => Err(Error::Config("conditional teacher needs labels".into())),
        }
    }

    /// Network input rows `[x | embed(level) | one-hot]`.
    fn net_input(&self, x: &Matrix, level: f64, labels: Option<&[usize]>) -> Result<Matrix> {
        if x.cols() != self.state_dim() {
            return Err(shape_err("teacher state", self.state_dim(), x.cols()));
        }
        self.check_labels(x.rows(), labels)?;
        let emb = sinusoidal_embedding(self.level_feature(level), TIME_EMBED_DIM);
        let mut input = match self.scalings(level) {
            Some(c) => {
                let mut scaled = x.clone();
                scaled.scale(c.c_in);
                scaled.hcat_row(&emb)
            }
            None => x.hcat_row(&emb),
        };
        if let (Some(k), Some(labels)) = (self.num_classes, labels) {
            let onehot = Matrix::from_fn(x.rows(), k, |i, j| f64::from(u8::from(labels[i] == j)));
            input = input.hcat(&onehot)?;
        }
        Ok(input)
    }

    fn scalings(&self, level: f64) -> Option<EdmScalings> {
        (self.kind == TeacherKind::Edm && self.precondition).then(|| edm_scalings(level, self.data_spec.marginal_std()))
    }

    /// The denoised estimate `D(x; σ)` (EDM) or the velocity `v(x, t)` (FM).
    pub fn eval_field(&self, x: &Matrix, level: f64, labels: Option<&[usize]>) -> Result<Matrix> {
        let mut out = self.net.forward_batch(&self.net_input(x, level, labels)?)?;
        if let Some(c) = self.scalings(level) {
            for (o, xv) in out.data_mut().iter_mut().zip(x.data()) {
                *o = c.c_skip * xv + c.c_out * *o;
            }
        }
        Ok(out)
    }

    /// Integrates a batch of prior samples to data space with `nfe` network evaluations.
    pub fn integrate(&self, x_t: Matrix, nfe: usize, labels: Option<&[usize]>, record: bool) -> Result<OdeSolution> {
        if nfe == 0 {
            return Err(Error::Config("nfe must be at least 1".into()));
        }
        self.check_labels(x_t.rows(), labels)?;
        let field = |x: &Matrix, level: f64| self.eval_field(x, level, labels);
        match self.kind {
            TeacherKind::Edm => {
                let p = self.sigma;
                let schedule = karras_grid(edm_levels_for_nfe(nfe), p.sigma_min, p.sigma_max, p.rho)?;
                integrate_edm(field, x_t, &schedule, record)
            }
            TeacherKind::FlowMatching => integrate_fm(field, x_t, nfe, record),
        }
    }

    /// Deterministic end map `x_T ↦ x_0` on a batch.
    pub fn end_map(&self, x_t: &Matrix, nfe: usize, labels: Option<&[usize]>) -> Result<Matrix> {
        Ok(self.integrate(x_t.clone(), nfe, labels, false)?.end)
    }

    /// Full ODE trajectory of a single point, starting at `x_t` and ending at `x_0`.
    pub fn sample_ode(&self, x_t: [f64; 2], nfe: usize, label: Option<usize>) -> Result<Vec<[f64; 2]>> {
        let labels = label.map(|l| [l]);
        let sol = self.integrate(
            Matrix::from_vec(1, 2, x_t.to_vec())?,
            nfe,
            labels.as_ref().map(|l| &l[..]),
            true,
        )?;
        Ok(sol.trajectory.iter().map(|m| [m.get(0, 0), m.get(0, 1)]).collect())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        ck.set_meta("model", "teacher");
        ck.set_meta("kind", self.kind);
        ck.set_meta("sigma_min", self.sigma.sigma_min);
        ck.set_meta("sigma_max", self.sigma.sigma_max);
        ck.set_meta("rho", self.sigma.rho);
        ck.set_meta("grid", self.data_spec.grid);
        ck.set_meta("extent", self.data_spec.extent);
        ck.set_meta("num_classes", self.num_classes.unwrap_or(0));
        ck.set_meta("precondition", self.precondition);
        ck.push_mlp("net", &self.net);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Teacher> {
        if ck.meta("model") != Some("teacher") {
            return Err(crate::FormatError::Malformed("checkpoint does not hold a teacher".into()).into());
        }
        let k: usize = ck.meta_parse("num_classes")?;
        let teacher = Teacher {
            kind: ck.meta_parse("kind")?,
            net: ck.mlp("net")?,
            sigma: SigmaParams {
                sigma_min: ck.meta_parse("sigma_min")?,
                sigma_max: ck.meta_parse("sigma_max")?,
                rho: ck.meta_parse("rho")?,
            },
            data_spec: CheckerboardSpec::new(ck.meta_parse("grid")?, ck.meta_parse("extent")?)?,
            num_classes: (k > 0).then_some(k),
            precondition: ck.meta_parse("precondition")?,
        };
        teacher.sigma.validate()?;
        if teacher.net.embed_dim() != TIME_EMBED_DIM + k || teacher.net.out_dim() != teacher.state_dim() {
            return Err(crate::FormatError::Malformed("teacher network shape is inconsistent".into()).into());
        }
        Ok(teacher)
    }
}
