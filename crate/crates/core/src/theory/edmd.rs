use std::io::Write;

use super::MonomialBasis;
use crate::error::{shape_err, Error, Result};
use crate::exec::{map_chunks, ExecPolicy};
use crate::ndmath::{lstsq, Matrix, Rng, DEFAULT_RIDGE};

/// Sampling and fitting options for [`edmd_fit`].
#[derive(Clone, Debug, PartialEq)]
pub struct EdmdConfig {
    /// Total samples; `holdout` of them are kept back for the reported residuals.
    pub samples: usize,
    pub holdout: f64,
    pub ridge: f64,
    /// Standard deviation of the isotropic Gaussian the states are drawn from.
    pub sample_std: f64,
    /// Reject states outside this radius (sampling from a truncated Gaussian).
    pub truncation: Option<f64>,
}

impl Default for EdmdConfig {
    fn default() -> Self {
        EdmdConfig {
            samples: 4000,
            holdout: 0.2,
            ridge: DEFAULT_RIDGE,
            sample_std: 1.0,
            truncation: None,
        }
    }
}

impl EdmdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.holdout > 0.0 && self.holdout < 1.0) {
            return Err(Error::Config(format!("holdout must be in (0, 1), got {}", self.holdout)));
        }
        if !(self.sample_std > 0.0) {
            return Err(Error::Config("sample_std must be positive".into()));
        }
        if self.truncation.is_some_and(|r| !(r > 0.0)) {
            return Err(Error::Config("truncation radius must be positive".into()));
        }
        let test = self.test_count();
        if test == 0 || test == self.samples {
            return Err(Error::Config(format!("{} samples leave an empty split", self.samples)));
        }
        Ok(())
    }

    fn test_count(&self) -> usize {
        (self.samples as f64 * self.holdout).round() as usize
    }
}

/// Least-squares Koopman fit on a monomial lifting, scored on held-out states.
#[derive(Clone, Debug, PartialEq)]
pub struct EdmdReport {
    pub degree: usize,
    pub lifted_dim: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    /// `Σ‖ξ(Φ(x)) − Cξ(x)‖² / Σ‖ξ(Φ(x))‖²` on the held-out states.
    pub full_lift_residual: f64,
    /// Mean `‖Φ(x) − Kξ(x)‖²` on the held-out states.
    pub state_residual: f64,
    /// The same state residual on the fitting states.
    pub train_state_residual: f64,
    /// `d × d` operator on lifted coordinates.
    pub c: Matrix,
    /// `n × d` readout from lifted coordinates back to the state.
    pub k: Matrix,
    pub warnings: Vec<String>,
}

/// Draws `n` states in `dim` dimensions from the configured (possibly truncated) Gaussian.
pub fn sample_states(dim: usize, cfg: &EdmdConfig, rng: &mut Rng) -> Matrix {
    let mut x = Matrix::zeros(cfg.samples, dim);
    for r in 0..cfg.samples {
        let row = x.row_mut(r);
        loop {
            rng.fill_normal(row, cfg.sample_std);
            match cfg.truncation {
                Some(radius) if row.iter().map(|v| v * v).sum::<f64>().sqrt() > radius => {}
                _ => break,
            }
        }
    }
    x
}

/// Fits `C` and `K` for the map `phi` on Gaussian states (see [`EdmdConfig`]).
pub fn edmd_fit<F>(phi: F, basis: &MonomialBasis, cfg: &EdmdConfig, rng: &mut Rng) -> Result<EdmdReport>
where
    F: Fn(&Matrix) -> Result<Matrix>,
{
    cfg.validate()?;
    let x = sample_states(basis.dim(), cfg, rng);
    let y = phi(&x)?;
    edmd_from_samples(&x, &y, basis, cfg)
}

/// Fits every degree in `degrees` on one shared sample set, so the reports differ only in
/// the feature space. Degrees are fitted independently under `policy`.
pub fn edmd_sweep<F>(
    phi: F,
    dim: usize,
    degrees: &[usize],
    cfg: &EdmdConfig,
    rng: &mut Rng,
    policy: ExecPolicy,
) -> Result<Vec<EdmdReport>>
where
    F: Fn(&Matrix) -> Result<Matrix>,
{
    cfg.validate()?;
    let bases = degrees
        .iter()
        .map(|&d| MonomialBasis::new(dim, d))
        .collect::<Result<Vec<_>>>()?;
    let x = sample_states(dim, cfg, rng);
    let y = phi(&x)?;
    map_chunks(policy, bases.len(), 1, |r| edmd_from_samples(&x, &y, &bases[r.start], cfg))
        .into_iter()
        .collect()
}

/// EDMD on given snapshot pairs `(xᵢ, yᵢ = Φ(xᵢ))`: the leading rows fit, the trailing
/// `holdout` fraction scores.
pub fn edmd_from_samples(x: &Matrix, y: &Matrix, basis: &MonomialBasis, cfg: &EdmdConfig) -> Result<EdmdReport> {
    if x.cols() != basis.dim() {
        return Err(shape_err("edmd state", basis.dim(), x.cols()));
    }
    if y.shape() != x.shape() {
        return Err(shape_err("edmd image", format!("{:?}", x.shape()), format!("{:?}", y.shape())));
    }
    let cfg = EdmdConfig {
        samples: x.rows(),
        ..cfg.clone()
    };
    cfg.validate()?;
    let n_test = cfg.test_count();
    let n_train = x.rows() - n_test;
    let d = basis.len();
    let mut warnings = Vec::new();
    if n_train < d {
        warnings.push(format!("{n_train} fitting samples for {d} lifted features"));
    }

    let lx = basis.lift_batch(x)?;
    let ly = basis.lift_batch(y)?;
    let fit = 0..n_train;
    let test = n_train..x.rows();
    let lx_fit = lx.select_rows(fit.clone());

    // Row-major snapshots: Ξ_x Cᵀ ≈ Ξ_y and Ξ_x Kᵀ ≈ Y.
    let c = lstsq(&lx_fit, &ly.select_rows(fit.clone()), cfg.ridge)?.transpose();
    let k = lstsq(&lx_fit, &y.select_rows(fit.clone()), cfg.ridge)?.transpose();

    let lx_test = lx.select_rows(test.clone());
    let ly_test = ly.select_rows(test.clone());
    let pred_lift = lx_test.matmul(&c.transpose())?;
    let num = squared_diff(&pred_lift, &ly_test);
    let den = ly_test.data().iter().map(|v| v * v).sum::<f64>();
    let full_lift_residual = if den > 0.0 { num / den } else { num };

    let state_residual = squared_diff(&lx_test.matmul(&k.transpose())?, &y.select_rows(test)) / n_test as f64;
    let train_state_residual = squared_diff(&lx_fit.matmul(&k.transpose())?, &y.select_rows(fit)) / n_train as f64;
    if !(full_lift_residual.is_finite() && state_residual.is_finite()) {
        return Err(Error::Divergence {
            iteration: 0,
            what: "edmd residual",
        });
    }
    Ok(EdmdReport {
        degree: basis.degree(),
        lifted_dim: d,
        train_samples: n_train,
        test_samples: n_test,
        full_lift_residual,
        state_residual,
        train_state_residual,
        c,
        k,
        warnings,
    })
}

fn squared_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.data().iter().zip(b.data()).map(|(p, q)| (p - q).powi(2)).sum()
}

/// CSV with header `degree,d,full_lift_residual,state_residual,train_state_residual`.
pub fn write_edmd_csv<W: Write>(reports: &[EdmdReport], mut out: W) -> std::io::Result<()> {
    writeln!(out, "degree,d,full_lift_residual,state_residual,train_state_residual")?;
    for r in reports {
        writeln!(
            out,
            "{},{},{:e},{:e},{:e}",
            r.degree, r.lifted_dim, r.full_lift_residual, r.state_residual, r.train_state_residual
        )?;
    }
    Ok(())
}
