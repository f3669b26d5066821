use crate::ndmath::{Matrix, Rng};

/// Relative change of the Rayleigh quotient below which power iteration stops.
pub const NORM_TOL: f64 = 1e-10;
/// Iteration cap for [`estimate_operator_norm`].
pub const NORM_MAX_ITER: usize = 10_000;

/// Result of [`estimate_operator_norm`]. When `converged` is false, `value` is the last
/// iterate and should be treated as a lower bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormEstimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Spectral norm `‖C‖₂` by power iteration on `CᵀC` from a fixed pseudo-random start.
pub fn estimate_operator_norm(c: &Matrix) -> NormEstimate {
    let (m, n) = c.shape();
    if m == 0 || n == 0 || c.data().iter().all(|&v| v == 0.0) {
        return NormEstimate {
            value: 0.0,
            iterations: 0,
            converged: true,
        };
    }
    let mut rng = Rng::new(0x5eed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    normalize(&mut v);
    let mut lambda = 0.0;
    for it in 1..=NORM_MAX_ITER {
        let cv = matvec(c, &v);
        let next = cv.iter().map(|x| x * x).sum::<f64>();
        let mut w = matvec_t(c, &cv);
        let w_norm = normalize(&mut w);
        let done = (next - lambda).abs() <= NORM_TOL * next;
        lambda = next;
        if done || w_norm == 0.0 {
            return NormEstimate {
                value: lambda.sqrt(),
                iterations: it,
                converged: true,
            };
        }
        v = w;
    }
    NormEstimate {
        value: lambda.sqrt(),
        iterations: NORM_MAX_ITER,
        converged: false,
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn matvec(c: &Matrix, v: &[f64]) -> Vec<f64> {
    (0..c.rows())
        .map(|i| c.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

fn matvec_t(c: &Matrix, u: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; c.cols()];
    for (i, &ui) in u.iter().enumerate() {
        for (o, a) in out.iter_mut().zip(c.row(i)) {
            *o += a * ui;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// One-sided Jacobi SVD: orthogonalise column pairs by plane rotations until every
    /// pair is orthogonal; the singular values are then the column norms.
    fn jacobi_singular_values(c: &Matrix) -> Vec<f64> {
        let (m, n) = c.shape();
        let mut a = c.clone();
        for _sweep in 0..100 {
            let mut off = 0.0f64;
            for p in 0..n {
                for q in p + 1..n {
                    let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                    for i in 0..m {
                        let (x, y) = (a.get(i, p), a.get(i, q));
                        alpha += x * x;
                        beta += y * y;
                        gamma += x * y;
                    }
                    if gamma == 0.0 {
                        continue;
                    }
                    off = off.max(gamma.abs() / (alpha * beta).sqrt());
                    let zeta = (beta - alpha) / (2.0 * gamma);
                    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                    let cs = 1.0 / (1.0 + t * t).sqrt();
                    let sn = cs * t;
                    for i in 0..m {
                        let (x, y) = (a.get(i, p), a.get(i, q));
                        a.set(i, p, cs * x - sn * y);
                        a.set(i, q, sn * x + cs * y);
                    }
                }
            }
            if off < 1e-15 {
                break;
            }
        }
        let mut s: Vec<f64> = (0..n)
            .map(|j| (0..m).map(|i| a.get(i, j).powi(2)).sum::<f64>().sqrt())
            .collect();
        s.sort_by(|x, y| y.total_cmp(x));
        s
    }

    #[test]
    fn diagonal_and_identity() {
        let d = Matrix::diag(&[3.0, -4.0]);
        assert!((estimate_operator_norm(&d).value - 4.0).abs() < 1e-9);
        let e = estimate_operator_norm(&Matrix::identity(5));
        assert!((e.value - 1.0).abs() < 1e-12 && e.converged);
        assert_eq!(estimate_operator_norm(&Matrix::zeros(3, 3)).value, 0.0);
    }

    #[test]
    fn oracle_is_sane() {
        let s = jacobi_singular_values(&Matrix::diag(&[3.0, -4.0, 0.5]));
        assert!((s[0] - 4.0).abs() < 1e-14 && (s[1] - 3.0).abs() < 1e-14 && (s[2] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn random_matrices_match_jacobi_svd() {
        let mut rng = Rng::new(21);
        for (m, n) in [(8, 8), (8, 8), (8, 8), (5, 9), (12, 3)] {
            let c = Matrix::from_fn(m, n, |_, _| rng.normal());
            let want = jacobi_singular_values(&c)[0];
            let got = estimate_operator_norm(&c);
            assert!(got.converged);
            assert!((got.value - want).abs() < 1e-8, "{} vs {want}", got.value);
        }
    }

    #[test]
    fn near_degenerate_top_pair() {
        // Two nearly equal top singular values: the Rayleigh quotient is still accurate.
        let c = Matrix::diag(&[1.0, 1.0 - 1e-9, 0.1]);
        let got = estimate_operator_norm(&c);
        assert!(got.value <= 1.0 + 1e-12 && got.value > 1.0 - 1e-8);
    }
}
