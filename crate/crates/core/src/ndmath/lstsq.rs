use super::Matrix;
use crate::error::{shape_err, Error, Result};

/// Default ridge damping for [`lstsq`].
pub const DEFAULT_RIDGE: f64 = 1e-10;

/// Least squares `X ≈ argmin ‖AX − B‖²_F` by Householder QR, which avoids squaring the
/// condition number the way the normal equations would.
///
/// Full-rank problems are solved undamped, so well-posed systems carry no ridge bias.
/// When QR finds a degenerate pivot and `ridge > 0`, the damped problem
/// `‖AX − B‖²_F + ridge·‖X‖²_F` is solved instead via the augmented system
/// `[A; √ridge·I] X ≈ [B; 0]`. With `ridge = 0` a rank-deficient `A` is a conditioning
/// error.
pub fn lstsq(a: &Matrix, b: &Matrix, ridge: f64) -> Result<Matrix> {
    if a.rows() != b.rows() {
        return Err(shape_err("lstsq row count", a.rows(), b.rows()));
    }
    if !(ridge >= 0.0) {
        return Err(Error::Config(format!("ridge must be >= 0, got {ridge}")));
    }
    match qr_solve(a, b, 0.0) {
        Err(Error::Conditioning { .. }) if ridge > 0.0 => qr_solve(a, b, ridge),
        other => other,
    }
}

fn qr_solve(a: &Matrix, b: &Matrix, ridge: f64) -> Result<Matrix> {
    let (m, n) = a.shape();
    let k = b.cols();
    let rows = if ridge > 0.0 { m + n } else { m };
    if rows < n {
        return Err(Error::Conditioning {
            column: rows,
            pivot: 0.0,
        });
    }

    // Column-major working copies make the Householder sweeps contiguous.
    let mut r = vec![0.0; rows * n];
    for j in 0..n {
        for i in 0..m {
            r[j * rows + i] = a.get(i, j);
        }
        if ridge > 0.0 {
            r[j * rows + m + j] = ridge.sqrt();
        }
    }
    let mut q = vec![0.0; rows * k];
    for j in 0..k {
        for i in 0..m {
            q[j * rows + i] = b.get(i, j);
        }
    }

    let scale = (0..n)
        .map(|j| r[j * rows..(j + 1) * rows].iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);

    let mut v = vec![0.0; rows];
    for j in 0..n {
        let col = &r[j * rows..(j + 1) * rows];
        let norm = col[j..].iter().map(|x| x * x).sum::<f64>().sqrt();
        let threshold = 1e-12 * scale;
        if norm <= threshold || scale == 0.0 {
            return Err(Error::Conditioning {
                column: j,
                pivot: norm,
            });
        }
        let alpha = if col[j] > 0.0 { -norm } else { norm };
        v[..j].iter_mut().for_each(|x| *x = 0.0);
        v[j..].copy_from_slice(&col[j..]);
        v[j] -= alpha;
        let vnorm2: f64 = v[j..].iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        let reflect = |buf: &mut [f64], cols: std::ops::Range<usize>| {
            for c in cols {
                let colv = &mut buf[c * rows..(c + 1) * rows];
                let dot: f64 = v[j..].iter().zip(&colv[j..]).map(|(a, b)| a * b).sum();
                let f = 2.0 * dot / vnorm2;
                for (x, vi) in colv[j..].iter_mut().zip(&v[j..]) {
                    *x -= f * vi;
                }
            }
        };
        reflect(&mut r, j..n);
        reflect(&mut q, 0..k);
    }

    // Back-substitution on the leading n x n triangle.
    let mut x = Matrix::zeros(n, k);
    for c in 0..k {
        for i in (0..n).rev() {
            let mut s = q[c * rows + i];
            for jj in i + 1..n {
                s -= r[jj * rows + i] * x.get(jj, c);
            }
            x.set(i, c, s / r[i * rows + i]);
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndmath::Rng;

    fn random(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.normal())
    }

    #[test]
    fn square_system_recovers_identity() {
        let mut rng = Rng::new(3);
        let a = random(6, 6, &mut rng);
        let x = lstsq(&a, &a, DEFAULT_RIDGE).unwrap();
        assert!(x.max_abs_diff(&Matrix::identity(6)) < 1e-10);
    }

    #[test]
    fn overdetermined_consistent_system() {
        let mut rng = Rng::new(4);
        let a = random(50, 5, &mut rng);
        let x_star = random(5, 3, &mut rng);
        let b = a.matmul(&x_star).unwrap();
        let x = lstsq(&a, &b, DEFAULT_RIDGE).unwrap();
        assert!(x.max_abs_diff(&x_star) < 1e-8);
        let x0 = lstsq(&a, &b, 0.0).unwrap();
        assert!(x0.max_abs_diff(&x_star) < 1e-12);
    }

    #[test]
    fn rank_deficient_with_ridge_is_damped() {
        // Duplicate columns: the damped minimiser splits the weight evenly.
        let a = Matrix::from_fn(8, 2, |i, _| i as f64 + 1.0);
        let b = Matrix::from_fn(8, 1, |i, _| 2.0 * (i as f64 + 1.0));
        let x = lstsq(&a, &b, 1e-6).unwrap();
        assert!((x.get(0, 0) - 1.0).abs() < 1e-6 && (x.get(1, 0) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_matrix_with_ridge_gives_zero() {
        let a = Matrix::zeros(10, 3);
        let b = Matrix::from_fn(10, 2, |i, j| (i + j) as f64);
        let x = lstsq(&a, &b, 1e-3).unwrap();
        assert!(x.data().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn rank_deficient_without_ridge_errors() {
        // Second column duplicates the first.
        let a = Matrix::from_fn(8, 2, |i, _| i as f64);
        let b = Matrix::zeros(8, 1);
        assert!(matches!(lstsq(&a, &b, 0.0), Err(Error::Conditioning { .. })));
        assert!(lstsq(&a, &b, 1e-8).is_ok());
    }

    #[test]
    fn row_mismatch() {
        assert!(lstsq(&Matrix::zeros(3, 2), &Matrix::zeros(4, 1), 0.0).is_err());
    }
}
