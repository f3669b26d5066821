use std::io::Write;

use crate::error::{shape_err, Error, Result};
use crate::ndmath::{Matrix, Rng};

/// Teacher–student agreement on shared noises, against a mismatched baseline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AgreementReport {
    pub n: usize,
    /// Mean `‖teacher(x_T) − student(x_T)‖²`.
    pub paired_mse: f64,
    /// The same with the student outputs deranged, so no noise is compared with itself.
    pub permuted_mse: f64,
}

impl AgreementReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "n,paired_mse,permuted_mse")?;
        writeln!(out, "{},{},{}", self.n, self.paired_mse, self.permuted_mse)
    }
}

/// A permutation of `0..n` without fixed points: a shuffle followed by a cyclic shift,
/// which makes it a single `n`-cycle.
pub fn derangement(n: usize, rng: &mut Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut perm = vec![0; n];
    for i in 0..n {
        perm[order[i]] = order[(i + 1) % n];
    }
    perm
}

/// Draws `n` noises `x_T ~ N(0, prior_std²·I)` from `seed`, maps them through both models
/// and compares the outputs.
pub fn agreement<T, S>(teacher: T, student: S, n: usize, dim: usize, prior_std: f64, seed: u64) -> Result<AgreementReport>
where
    T: Fn(&Matrix) -> Result<Matrix>,
    S: Fn(&Matrix) -> Result<Matrix>,
{
    if n < 2 {
        return Err(Error::Config("agreement needs at least two noises".into()));
    }
    let mut rng = Rng::new(seed);
    let mut x = Matrix::zeros(n, dim);
    rng.fill_normal(x.data_mut(), prior_std);
    let a = teacher(&x)?;
    let b = student(&x)?;
    if a.shape() != b.shape() || a.rows() != n {
        return Err(shape_err("agreement outputs", format!("{:?}", a.shape()), format!("{:?}", b.shape())));
    }
    let perm = derangement(n, &mut rng);
    let sq = |i: usize, j: usize| a.row(i).iter().zip(b.row(j)).map(|(p, q)| (p - q).powi(2)).sum::<f64>();
    Ok(AgreementReport {
        n,
        paired_mse: (0..n).map(|i| sq(i, i)).sum::<f64>() / n as f64,
        permuted_mse: (0..n).map(|i| sq(i, perm[i])).sum::<f64>() / n as f64,
    })
}
