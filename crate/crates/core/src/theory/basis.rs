use crate::error::{shape_err, Error, Result};
use crate::ndmath::Matrix;

/// Largest lifted dimension a basis may have.
const MAX_FEATURES: usize = 100_000;

/// All monomials `∏ xᵢ^αᵢ` in `n` variables with total degree at most `degree`.
///
/// Ordered by total degree, then lexicographically by exponent with the first variable's
/// power descending, so the constant comes first and degree one lists `x₁ … xₙ`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MonomialBasis {
    dim: usize,
    degree: usize,
    exponents: Vec<Vec<u32>>,
}

impl MonomialBasis {
    pub fn new(dim: usize, degree: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("monomial basis needs at least one variable".into()));
        }
        let size = binomial(dim + degree, degree);
        if size.is_none_or(|s| s > MAX_FEATURES) {
            return Err(Error::Config(format!(
                "monomial basis of degree {degree} in {dim} variables exceeds {MAX_FEATURES} features"
            )));
        }
        let exponents = (0..=degree).flat_map(|t| compositions(dim, t as u32)).collect();
        Ok(MonomialBasis { dim, degree, exponents })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of monomials, `C(n + degree, degree)`.
    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    fn lift_into(&self, x: &[f64], powers: &mut [f64], out: &mut [f64]) {
        let stride = self.degree + 1;
        for (i, &xi) in x.iter().enumerate() {
            let row = &mut powers[i * stride..(i + 1) * stride];
            row[0] = 1.0;
            for p in 1..stride {
                row[p] = row[p - 1] * xi;
            }
        }
        for (o, alpha) in out.iter_mut().zip(&self.exponents) {
            *o = alpha
                .iter()
                .enumerate()
                .map(|(i, &a)| powers[i * stride + a as usize])
                .product();
        }
    }

    /// Lifts every row of `x` (one state per row).
    pub fn lift_batch(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.dim {
            return Err(shape_err("monomial lift state", self.dim, x.cols()));
        }
        let mut out = Matrix::zeros(x.rows(), self.len());
        let mut powers = vec![0.0; self.dim * (self.degree + 1)];
        for r in 0..x.rows() {
            self.lift_into(x.row(r), &mut powers, out.row_mut(r));
        }
        Ok(out)
    }
}

/// `ξ(x)`: the monomials of `basis` evaluated at `x`, in basis order.
pub fn monomial_lift(basis: &MonomialBasis, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != basis.dim {
        return Err(shape_err("monomial lift state", basis.dim, x.len()));
    }
    let mut out = vec![0.0; basis.len()];
    let mut powers = vec![0.0; basis.dim * (basis.degree + 1)];
    basis.lift_into(x, &mut powers, &mut out);
    Ok(out)
}

fn binomial(n: usize, k: usize) -> Option<usize> {
    let k = k.min(n - k);
    (0..k).try_fold(1usize, |acc, i| acc.checked_mul(n - i).map(|v| v / (i + 1)))
}

/// Exponent vectors of length `n` summing to `total`, first entry descending.
fn compositions(n: usize, total: u32) -> Vec<Vec<u32>> {
    if n == 1 {
        return vec![vec![total]];
    }
    (0..=total)
        .rev()
        .flat_map(|first| {
            compositions(n - 1, total - first).into_iter().map(move |mut rest| {
                rest.insert(0, first);
                rest
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndmath::Rng;

    #[test]
    fn degree_one_in_two_variables() {
        let b = MonomialBasis::new(2, 1).unwrap();
        assert_eq!(monomial_lift(&b, &[3.0, -2.0]).unwrap(), vec![1.0, 3.0, -2.0]);
    }

    #[test]
    fn sizes_are_binomial() {
        assert_eq!(MonomialBasis::new(2, 3).unwrap().len(), 10);
        assert_eq!(MonomialBasis::new(2, 6).unwrap().len(), 28);
        assert_eq!(MonomialBasis::new(3, 4).unwrap().len(), 35);
        assert_eq!(MonomialBasis::new(5, 0).unwrap().len(), 1);
        assert!(MonomialBasis::new(0, 2).is_err());
        assert!(MonomialBasis::new(50, 50).is_err());
    }

    #[test]
    fn exponents_are_unique_and_graded() {
        let b = MonomialBasis::new(3, 4).unwrap();
        assert!(b.exponents()[0].iter().all(|&a| a == 0));
        let mut seen = std::collections::HashSet::new();
        let mut last = 0;
        for a in b.exponents() {
            let t: u32 = a.iter().sum();
            assert!(t >= last && t <= 4);
            last = t;
            assert!(seen.insert(a.clone()));
        }
    }

    #[test]
    fn matches_scalar_evaluation() {
        let mut rng = Rng::new(3);
        for (n, d) in [(2, 5), (3, 3), (1, 6)] {
            let b = MonomialBasis::new(n, d).unwrap();
            let x: Vec<f64> = (0..n).map(|_| 1.5 * rng.normal()).collect();
            let got = monomial_lift(&b, &x).unwrap();
            for (g, alpha) in got.iter().zip(b.exponents()) {
                let mut want = 1.0;
                for (xi, &a) in x.iter().zip(alpha) {
                    want *= xi.powi(a as i32);
                }
                assert!((g - want).abs() <= 1e-12 * want.abs().max(1.0), "{g} vs {want}");
            }
            let batch = Matrix::from_vec(1, n, x.clone()).unwrap();
            assert_eq!(b.lift_batch(&batch).unwrap().row(0), &got[..]);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let b = MonomialBasis::new(2, 2).unwrap();
        assert!(matches!(monomial_lift(&b, &[1.0]), Err(Error::Shape { .. })));
        assert!(b.lift_batch(&Matrix::zeros(4, 3)).is_err());
    }
}
