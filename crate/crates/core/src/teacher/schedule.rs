use crate::error::{Error, Result};

/// Generator parameters of a Karras noise grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SigmaParams {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub rho: f64,
}

impl Default for SigmaParams {
    fn default() -> Self {
        SigmaParams {
            sigma_min: 0.002,
            sigma_max: 10.0,
            rho: 7.0,
        }
    }
}

impl SigmaParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_min > 0.0 && self.sigma_min < self.sigma_max && self.sigma_max.is_finite()) {
            return Err(Error::Config(format!(
                "need 0 < sigma_min < sigma_max, got {} / {}",
                self.sigma_min, self.sigma_max
            )));
        }
        if !(self.rho > 0.0) {
            return Err(Error::Config(format!("rho must be positive, got {}", self.rho)));
        }
        Ok(())
    }
}

/// Strictly decreasing noise levels `σ_0 = σ_max > … > σ_{N−1} = σ_min`, followed by a
/// terminal 0.
#[derive(Clone, Debug, PartialEq)]
pub struct SigmaSchedule {
    sigmas: Vec<f64>,
    pub params: SigmaParams,
}

impl SigmaSchedule {
    /// All levels including the terminal zero.
    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    /// Number of nonzero levels.
    pub fn n_steps(&self) -> usize {
        self.sigmas.len() - 1
    }
}

/// `σ_i = (σ_max^{1/ρ} + i/(N−1)·(σ_min^{1/ρ} − σ_max^{1/ρ}))^ρ` for `i = 0..N`, then 0.
pub fn karras_grid(n_steps: usize, sigma_min: f64, sigma_max: f64, rho: f64) -> Result<SigmaSchedule> {
    let params = SigmaParams {
        sigma_min,
        sigma_max,
        rho,
    };
    params.validate()?;
    if n_steps == 0 {
        return Err(Error::Config("karras grid needs at least one step".into()));
    }
    let mut sigmas = Vec::with_capacity(n_steps + 1);
    if n_steps == 1 {
        sigmas.push(sigma_max);
    } else {
        let hi = sigma_max.powf(1.0 / rho);
        let lo = sigma_min.powf(1.0 / rho);
        for i in 0..n_steps {
            let s = if i == 0 {
                sigma_max
            } else if i == n_steps - 1 {
                sigma_min
            } else {
                let frac = i as f64 / (n_steps - 1) as f64;
                (hi + frac * (lo - hi)).powf(rho)
            };
            sigmas.push(s);
        }
    }
    sigmas.push(0.0);
    Ok(SigmaSchedule { sigmas, params })
}
