use std::io::Write;

use crate::error::{Error, Result};
use crate::ndmath::{Matrix, Rng};

/// Noise scales probed by default, starting at the unperturbed noise.
pub const DEFAULT_SWEEP_SIGMAS: [f64; 8] = [0.0, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6];

/// Outputs of a sampler on perturbed copies of fixed base noises.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub sigmas: Vec<f64>,
    /// One matrix per σ, one row per base noise; skipped rows are NaN.
    pub outputs: Vec<Matrix>,
    /// `valid[s][i]` is false when the perturbed noise had zero norm and was skipped.
    pub valid: Vec<Vec<bool>>,
    /// Mean `‖output_σ − output_σ₀‖` over rows valid at both σ and the first σ.
    pub mean_displacement: Vec<f64>,
}

impl SweepResult {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "sigma,mean_displacement,valid")?;
        for (s, (d, v)) in self.sigmas.iter().zip(self.mean_displacement.iter().zip(&self.valid)) {
            writeln!(out, "{s},{d},{}", v.iter().filter(|&&b| b).count())?;
        }
        Ok(())
    }
}

/// Perturbs every base noise as `x̂ = x_T + σ·ε` (one `ε ~ N(0, I)` per base noise, shared
/// across the grid), rescales `x̂` onto the prior shell `‖x̂‖ = prior_std·√n`, and maps
/// the result through `sampler`.
pub fn perturbation_sweep<F>(sampler: F, x_t: &Matrix, sigmas: &[f64], prior_std: f64, rng: &mut Rng) -> Result<SweepResult>
where
    F: Fn(&Matrix) -> Result<Matrix>,
{
    if sigmas.is_empty() {
        return Err(Error::Config("perturbation sweep needs at least one sigma".into()));
    }
    if sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) || !(prior_std > 0.0) {
        return Err(Error::Config("sweep sigmas must be >= 0 and prior_std > 0".into()));
    }
    let (n, dim) = x_t.shape();
    let mut eps = Matrix::zeros(n, dim);
    rng.fill_normal(eps.data_mut(), 1.0);
    let shell = prior_std * (dim as f64).sqrt();

    let mut outputs = Vec::with_capacity(sigmas.len());
    let mut valid = Vec::with_capacity(sigmas.len());
    for &s in sigmas {
        let mut xh = Matrix::from_fn(n, dim, |i, j| x_t.get(i, j) + s * eps.get(i, j));
        let ok: Vec<bool> = (0..n)
            .map(|i| {
                let norm = xh.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
                let good = norm > 0.0 && norm.is_finite();
                if good {
                    xh.row_mut(i).iter_mut().for_each(|v| *v *= shell / norm);
                }
                good
            })
            .collect();
        let keep: Vec<usize> = (0..n).filter(|&i| ok[i]).collect();
        let mapped = sampler(&xh.gather_rows(&keep))?;
        let mut out = Matrix::from_fn(n, mapped.cols(), |_, _| f64::NAN);
        for (r, &i) in keep.iter().enumerate() {
            out.row_mut(i).copy_from_slice(mapped.row(r));
        }
        outputs.push(out);
        valid.push(ok);
    }

    let base = &outputs[0];
    let mean_displacement = outputs
        .iter()
        .zip(&valid)
        .map(|(o, v)| {
            let rows: Vec<usize> = (0..n).filter(|&i| v[i] && valid[0][i]).collect();
            if rows.is_empty() {
                return f64::NAN;
            }
            rows.iter()
                .map(|&i| o.row(i).iter().zip(base.row(i)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
                .sum::<f64>()
                / rows.len() as f64
        })
        .collect();
    Ok(SweepResult {
        sigmas: sigmas.to_vec(),
        outputs,
        valid,
        mean_displacement,
    })
}
