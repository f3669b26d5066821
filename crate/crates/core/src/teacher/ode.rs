//! Deterministic reverse-time ODE integration with Heun's method.

use super::SigmaSchedule;
use crate::error::{Error, Result};
use crate::ndmath::Matrix;

/// Integrated end state plus, when requested, every intermediate state (initial state
/// first, final state last).
#[derive(Clone, Debug)]
pub struct OdeSolution {
    pub end: Matrix,
    pub trajectory: Vec<Matrix>,
}

/// Number of noise levels an EDM sampler can afford within `nfe` evaluations: Heun on
/// every interval between nonzero levels and a single Euler step to σ = 0 costs `2N − 1`.
pub fn edm_levels_for_nfe(nfe: usize) -> usize {
    nfe.div_ceil(2).max(1)
}

/// Heun steps a flow-matching sampler can afford within `nfe` evaluations (a single
/// Euler step when `nfe == 1`).
pub fn fm_steps_for_nfe(nfe: usize) -> usize {
    (nfe / 2).max(1)
}

fn check(x: &Matrix, step: usize) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::Integration { step })
    }
}

/// `x + h·d`
fn axpy(x: &Matrix, h: f64, d: &Matrix) -> Matrix {
    let mut out = x.clone();
    out.data_mut()
        .iter_mut()
        .zip(d.data())
        .for_each(|(o, v)| *o += h * v);
    out
}

/// Integrates `dx/dσ = (x − D(x; σ)) / σ` down the schedule. Heun on every interval
/// except the last one, which steps to σ = 0 with Euler.
pub fn integrate_edm<F>(denoise: F, x_t: Matrix, schedule: &SigmaSchedule, record: bool) -> Result<OdeSolution>
where
    F: Fn(&Matrix, f64) -> Result<Matrix>,
{
    let sigmas = schedule.sigmas();
    check(&x_t, 0)?;
    let mut trajectory = Vec::new();
    if record {
        trajectory.push(x_t.clone());
    }
    let slope = |x: &Matrix, sigma: f64| -> Result<Matrix> {
        let d = denoise(x, sigma)?;
        let mut out = x.clone();
        out.data_mut()
            .iter_mut()
            .zip(d.data())
            .for_each(|(o, dv)| *o = (*o - dv) / sigma);
        Ok(out)
    };
    let mut x = x_t;
    for (i, w) in sigmas.windows(2).enumerate() {
        let (s_cur, s_next) = (w[0], w[1]);
        let h = s_next - s_cur;
        let d = slope(&x, s_cur)?;
        let euler = axpy(&x, h, &d);
        x = if s_next > 0.0 {
            let d2 = slope(&euler, s_next)?;
            let mut avg = d;
            avg.data_mut()
                .iter_mut()
                .zip(d2.data())
                .for_each(|(a, b)| *a = 0.5 * (*a + b));
            axpy(&x, h, &avg)
        } else {
            euler
        };
        check(&x, i + 1)?;
        if record {
            trajectory.push(x.clone());
        }
    }
    Ok(OdeSolution { end: x, trajectory })
}

/// Integrates `dx/dt = v(x, t)` from `t = 1` to `t = 0` on a uniform grid with Heun's
/// method (Euler when `nfe == 1`).
pub fn integrate_fm<F>(velocity: F, x_1: Matrix, nfe: usize, record: bool) -> Result<OdeSolution>
where
    F: Fn(&Matrix, f64) -> Result<Matrix>,
{
    if nfe == 0 {
        return Err(Error::Config("nfe must be at least 1".into()));
    }
    check(&x_1, 0)?;
    let steps = fm_steps_for_nfe(nfe);
    let heun = nfe >= 2;
    let mut trajectory = Vec::new();
    if record {
        trajectory.push(x_1.clone());
    }
    let mut x = x_1;
    for i in 0..steps {
        let t = 1.0 - i as f64 / steps as f64;
        let t_next = 1.0 - (i + 1) as f64 / steps as f64;
        let h = t_next - t;
        let d = velocity(&x, t)?;
        let euler = axpy(&x, h, &d);
        x = if heun {
            let d2 = velocity(&euler, t_next)?;
            let mut avg = d;
            avg.data_mut()
                .iter_mut()
                .zip(d2.data())
                .for_each(|(a, b)| *a = 0.5 * (*a + b));
            axpy(&x, h, &avg)
        } else {
            euler
        };
        check(&x, i + 1)?;
        if record {
            trajectory.push(x.clone());
        }
    }
    Ok(OdeSolution { end: x, trajectory })
}
