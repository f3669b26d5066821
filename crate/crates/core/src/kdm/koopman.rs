use std::fmt;
use std::str::FromStr;

use crate::error::{shape_err, Error, Result};
use crate::ndmath::{gemm, Matrix, Parameters, Rng};

/// Parameterisation of the latent Koopman operator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OperatorKind {
    #[default]
    Dense,
    Factorized,
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OperatorKind::Dense => "dense",
            OperatorKind::Factorized => "factorized",
        })
    }
}

impl FromStr for OperatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(OperatorKind::Dense),
            "factorized" => Ok(OperatorKind::Factorized),
            other => Err(Error::Config(format!(
                "unknown operator kind {other:?} (expected dense or factorized)"
            ))),
        }
    }
}

/// Linear latent map `z ↦ C z`.
///
/// The factorised form is `C = Re[P⁻¹ Λ P]` restricted to real inputs, with complex
/// `P = P_re + i·P_im`, an independently learned `P⁻¹ = Pinv_re + i·Pinv_im` and
/// `Λ = diag(λ)`, `λ_j = exp(−exp(ν_j))·exp(iθ_j)`, so every eigenvalue modulus lies in
/// (0, 1) whatever the value of ν.
#[derive(Clone, Debug, PartialEq)]
pub enum KoopmanOperator {
    Dense {
        c: Matrix,
    },
    Factorized {
        p_re: Matrix,
        p_im: Matrix,
        pinv_re: Matrix,
        pinv_im: Matrix,
        nu: Vec<f64>,
        theta: Vec<f64>,
    },
}

/// Intermediates of a batched factorised apply, reused by the backward pass.
pub struct FactorizedTape {
    u: Matrix,
    v: Matrix,
    a: Matrix,
    b: Matrix,
}

/// Modulus `exp(−exp(ν))` of a factorised eigenvalue.
pub fn eigen_modulus(nu: f64) -> f64 {
    (-nu.exp()).exp()
}

fn mul_t(x: &Matrix, w: &Matrix) -> Matrix {
    // x · wᵀ
    let mut out = Matrix::zeros(x.rows(), w.rows());
    gemm(1.0, x, false, w, true, 0.0, &mut out);
    out
}

impl KoopmanOperator {
    /// Identity for the dense form; for the factorised form `P = P⁻¹ = I`, θ = 0 and ν set
    /// so that every modulus equals `modulus`.
    pub fn identity_like(kind: OperatorKind, d: usize, modulus: f64) -> Self {
        match kind {
            OperatorKind::Dense => KoopmanOperator::Dense {
                c: Matrix::identity(d),
            },
            OperatorKind::Factorized => KoopmanOperator::Factorized {
                p_re: Matrix::identity(d),
                p_im: Matrix::zeros(d, d),
                pinv_re: Matrix::identity(d),
                pinv_im: Matrix::zeros(d, d),
                nu: vec![(-modulus.ln()).ln(); d],
                theta: vec![0.0; d],
            },
        }
    }

    /// Random operator (Gaussian entries with standard deviation `scale / √d`, ν and θ
    /// Gaussian), for tests and benchmarks.
    pub fn random(kind: OperatorKind, d: usize, scale: f64, rng: &mut Rng) -> Self {
        let s = scale / (d as f64).sqrt();
        let mut m = || Matrix::from_fn(d, d, |_, _| s * rng.normal());
        match kind {
            OperatorKind::Dense => KoopmanOperator::Dense { c: m() },
            OperatorKind::Factorized => {
                let (p_re, p_im, pinv_re, pinv_im) = (m(), m(), m(), m());
                KoopmanOperator::Factorized {
                    p_re,
                    p_im,
                    pinv_re,
                    pinv_im,
                    nu: (0..d).map(|_| rng.normal()).collect(),
                    theta: (0..d).map(|_| 3.0 * rng.normal()).collect(),
                }
            }
        }
    }

    pub fn kind(&self) -> OperatorKind {
        match self {
            KoopmanOperator::Dense { .. } => OperatorKind::Dense,
            KoopmanOperator::Factorized { .. } => OperatorKind::Factorized,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            KoopmanOperator::Dense { c } => c.rows(),
            KoopmanOperator::Factorized { nu, .. } => nu.len(),
        }
    }

    /// `(Re λ, Im λ)` of the factorised eigenvalues.
    fn lambda(nu: &[f64], theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        nu.iter()
            .zip(theta)
            .map(|(&n, &t)| {
                let m = eigen_modulus(n);
                (m * t.cos(), m * t.sin())
            })
            .unzip()
    }

    /// Applies the operator to every row of `z` (shape `B × d`).
    pub fn apply_batch(&self, z: &Matrix) -> Result<Matrix> {
        Ok(self.apply_tape(z)?.0)
    }

    pub(crate) fn apply_tape(&self, z: &Matrix) -> Result<(Matrix, Option<FactorizedTape>)> {
        if z.cols() != self.dim() {
            return Err(shape_err("koopman input", self.dim(), z.cols()));
        }
        match self {
            KoopmanOperator::Dense { c } => Ok((mul_t(z, c), None)),
            KoopmanOperator::Factorized {
                p_re,
                p_im,
                pinv_re,
                pinv_im,
                nu,
                theta,
            } => {
                let (lre, lim) = Self::lambda(nu, theta);
                let u = mul_t(z, p_re);
                let v = mul_t(z, p_im);
                let d = self.dim();
                let mut a = Matrix::zeros(z.rows(), d);
                let mut b = Matrix::zeros(z.rows(), d);
                for i in 0..z.rows() {
                    let (ur, vr) = (u.row(i), v.row(i));
                    for j in 0..d {
                        a.set(i, j, lre[j] * ur[j] - lim[j] * vr[j]);
                        b.set(i, j, lim[j] * ur[j] + lre[j] * vr[j]);
                    }
                }
                let mut out = mul_t(&a, pinv_re);
                gemm(-1.0, &b, false, pinv_im, true, 1.0, &mut out);
                Ok((out, Some(FactorizedTape { u, v, a, b })))
            }
        }
    }

    /// Reverse pass of [`KoopmanOperator::apply_batch`]: accumulates parameter gradients
    /// into `grads` (an operator of the same kind) and returns `∂L/∂z`.
    pub(crate) fn backward(
        &self,
        z: &Matrix,
        tape: Option<&FactorizedTape>,
        g: &Matrix,
        grads: &mut KoopmanOperator,
    ) -> Result<Matrix> {
        let mut dz = Matrix::zeros(z.rows(), self.dim());
        match (self, grads, tape) {
            (KoopmanOperator::Dense { c }, KoopmanOperator::Dense { c: gc }, _) => {
                gemm(1.0, g, true, z, false, 1.0, gc);
                gemm(1.0, g, false, c, false, 0.0, &mut dz);
            }
            (
                KoopmanOperator::Factorized {
                    p_re,
                    p_im,
                    pinv_re,
                    pinv_im,
                    nu,
                    theta,
                },
                KoopmanOperator::Factorized {
                    p_re: g_p_re,
                    p_im: g_p_im,
                    pinv_re: g_pinv_re,
                    pinv_im: g_pinv_im,
                    nu: g_nu,
                    theta: g_theta,
                },
                Some(t),
            ) => {
                let (lre, lim) = Self::lambda(nu, theta);
                let d = self.dim();
                let n = z.rows();
                // out = A·Pinv_reᵀ − B·Pinv_imᵀ
                gemm(1.0, g, true, &t.a, false, 1.0, g_pinv_re);
                gemm(-1.0, g, true, &t.b, false, 1.0, g_pinv_im);
                let mut da = Matrix::zeros(n, d);
                gemm(1.0, g, false, pinv_re, false, 0.0, &mut da);
                let mut db = Matrix::zeros(n, d);
                gemm(-1.0, g, false, pinv_im, false, 0.0, &mut db);
                // A = λre∘U − λim∘V, B = λim∘U + λre∘V
                let mut du = Matrix::zeros(n, d);
                let mut dv = Matrix::zeros(n, d);
                let mut dlre = vec![0.0; d];
                let mut dlim = vec![0.0; d];
                for i in 0..n {
                    for j in 0..d {
                        let (ga, gb) = (da.get(i, j), db.get(i, j));
                        let (uu, vv) = (t.u.get(i, j), t.v.get(i, j));
                        du.set(i, j, lre[j] * ga + lim[j] * gb);
                        dv.set(i, j, -lim[j] * ga + lre[j] * gb);
                        dlre[j] += ga * uu + gb * vv;
                        dlim[j] += -ga * vv + gb * uu;
                    }
                }
                for j in 0..d {
                    // λre = m cos θ, λim = m sin θ, m = exp(−exp ν)
                    g_theta[j] += -dlre[j] * lim[j] + dlim[j] * lre[j];
                    g_nu[j] += -nu[j].exp() * (dlre[j] * lre[j] + dlim[j] * lim[j]);
                }
                // U = Z·P_reᵀ, V = Z·P_imᵀ
                gemm(1.0, &du, true, z, false, 1.0, g_p_re);
                gemm(1.0, &dv, true, z, false, 1.0, g_p_im);
                gemm(1.0, &du, false, p_re, false, 0.0, &mut dz);
                gemm(1.0, &dv, false, p_im, false, 1.0, &mut dz);
            }
            _ => {
                return Err(shape_err(
                    "koopman backward",
                    "gradient buffer and tape matching the operator kind",
                    "mismatched operator kinds",
                ))
            }
        }
        Ok(dz)
    }

    /// Zeroed operator of the same kind and size (gradient accumulator).
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for p in out.params_mut() {
            p.iter_mut().for_each(|v| *v = 0.0);
        }
        out
    }
}

impl Parameters for KoopmanOperator {
    fn params(&self) -> Vec<&[f64]> {
        match self {
            KoopmanOperator::Dense { c } => vec![c.data()],
            KoopmanOperator::Factorized {
                p_re,
                p_im,
                pinv_re,
                pinv_im,
                nu,
                theta,
            } => vec![p_re.data(), p_im.data(), pinv_re.data(), pinv_im.data(), nu, theta],
        }
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            KoopmanOperator::Dense { c } => vec![c.data_mut()],
            KoopmanOperator::Factorized {
                p_re,
                p_im,
                pinv_re,
                pinv_im,
                nu,
                theta,
            } => vec![
                p_re.data_mut(),
                p_im.data_mut(),
                pinv_re.data_mut(),
                pinv_im.data_mut(),
                nu,
                theta,
            ],
        }
    }

    fn param_names(&self) -> Vec<String> {
        match self {
            KoopmanOperator::Dense { .. } => vec!["c".into()],
            KoopmanOperator::Factorized { .. } => ["p_re", "p_im", "pinv_re", "pinv_im", "nu", "theta"]
                .map(String::from)
                .to_vec(),
        }
    }
}

/// Applies the operator to a single latent vector.
pub fn koopman_apply(op: &KoopmanOperator, z: &[f64]) -> Result<Vec<f64>> {
    let m = Matrix::from_vec(1, z.len(), z.to_vec())?;
    Ok(op.apply_batch(&m)?.into_vec())
}

/// Eigenvalues `λ_j = exp(−exp(ν_j))·exp(iθ_j)` as `(re, im)` pairs. Only defined for the
/// factorised form.
pub fn koopman_eigenvalues(op: &KoopmanOperator) -> Result<Vec<(f64, f64)>> {
    match op {
        KoopmanOperator::Dense { .. } => Err(Error::Unsupported(
            "eigenvalues are only exposed by the factorized operator",
        )),
        KoopmanOperator::Factorized { nu, theta, .. } => {
            let (re, im) = KoopmanOperator::lambda(nu, theta);
            Ok(re.into_iter().zip(im).collect())
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Minimal complex arithmetic for the oracle.
    #[derive(Clone, Copy, Debug)]
    struct C(f64, f64);

    impl C {
        fn mul(self, o: C) -> C {
            C(self.0 * o.0 - self.1 * o.1, self.0 * o.1 + self.1 * o.0)
        }
        fn add(self, o: C) -> C {
            C(self.0 + o.0, self.1 + o.1)
        }
    }

    fn cmatvec(re: &Matrix, im: &Matrix, x: &[C]) -> Vec<C> {
        (0..re.rows())
            .map(|i| {
                (0..re.cols()).fold(C(0.0, 0.0), |acc, j| acc.add(C(re.get(i, j), im.get(i, j)).mul(x[j])))
            })
            .collect()
    }

    /// Re[P⁻¹ Λ P z] computed in explicit complex arithmetic.
    pub(crate) fn complex_oracle(op: &KoopmanOperator, z: &[f64]) -> Vec<f64> {
        let KoopmanOperator::Factorized {
            p_re,
            p_im,
            pinv_re,
            pinv_im,
            nu,
            theta,
        } = op
        else {
            panic!("oracle needs a factorized operator");
        };
        let zc: Vec<C> = z.iter().map(|&v| C(v, 0.0)).collect();
        let pz = cmatvec(p_re, p_im, &zc);
        let lpz: Vec<C> = pz
            .iter()
            .zip(nu.iter().zip(theta))
            .map(|(w, (&n, &t))| {
                let m = (-(n.exp())).exp();
                C(m * t.cos(), m * t.sin()).mul(*w)
            })
            .collect();
        cmatvec(pinv_re, pinv_im, &lpz).iter().map(|c| c.0).collect()
    }

    /// The 2d-dimensional real block form acting on [z; 0], first d entries kept.
    fn block_oracle(op: &KoopmanOperator, z: &[f64]) -> Vec<f64> {
        let KoopmanOperator::Factorized {
            p_re,
            p_im,
            pinv_re,
            pinv_im,
            nu,
            theta,
        } = op
        else {
            panic!()
        };
        let d = z.len();
        let block = |re: &Matrix, im: &Matrix| {
            Matrix::from_fn(2 * d, 2 * d, |i, j| match (i < d, j < d) {
                (true, true) => re.get(i, j),
                (true, false) => -im.get(i, j - d),
                (false, true) => im.get(i - d, j),
                (false, false) => re.get(i - d, j - d),
            })
        };
        let lam = Matrix::from_fn(2 * d, 2 * d, |i, j| {
            let (k, l) = (i % d, j % d);
            if k != l {
                return 0.0;
            }
            let m = (-(nu[k].exp())).exp();
            let (re, im) = (m * theta[k].cos(), m * theta[k].sin());
            match (i < d, j < d) {
                (true, true) | (false, false) => re,
                (true, false) => -im,
                (false, true) => im,
            }
        });
        let mut zt = z.to_vec();
        zt.extend(vec![0.0; d]);
        let full = block(pinv_re, pinv_im)
            .matmul(&lam)
            .unwrap()
            .matmul(&block(p_re, p_im))
            .unwrap()
            .matvec(&zt)
            .unwrap();
        full[..d].to_vec()
    }

    #[test]
    fn dense_identity() {
        let op = KoopmanOperator::identity_like(OperatorKind::Dense, 4, 1.0);
        assert_eq!(koopman_apply(&op, &[1.0, -2.0, 3.0, 0.5]).unwrap(), vec![1.0, -2.0, 3.0, 0.5]);
    }

    #[test]
    fn factorized_near_identity() {
        let mut op = KoopmanOperator::identity_like(OperatorKind::Factorized, 3, 0.5);
        if let KoopmanOperator::Factorized { nu, .. } = &mut op {
            nu.iter_mut().for_each(|v| *v = -20.0);
        }
        let z = [0.3, -1.7, 2.2];
        let out = koopman_apply(&op, &z).unwrap();
        for (a, b) in out.iter().zip(&z) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn identity_like_sets_modulus() {
        let op = KoopmanOperator::identity_like(OperatorKind::Factorized, 5, 0.9);
        for (re, im) in koopman_eigenvalues(&op).unwrap() {
            assert!((re.hypot(im) - 0.9).abs() < 1e-12);
        }
    }

    #[test]
    fn factorized_matches_complex_and_block_oracles() {
        let mut rng = Rng::new(8);
        for case in 0..100 {
            let d = 1 + case % 32;
            let op = KoopmanOperator::random(OperatorKind::Factorized, d, 1.0, &mut rng);
            let z: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
            let got = koopman_apply(&op, &z).unwrap();
            let want = complex_oracle(&op, &z);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-10, "case {case}: {a} vs {b}");
            }
            if d <= 8 {
                for (a, b) in got.iter().zip(block_oracle(&op, &z)) {
                    assert!((a - b).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn eigenvalue_formula() {
        let mut op = KoopmanOperator::identity_like(OperatorKind::Factorized, 2, 0.5);
        if let KoopmanOperator::Factorized { nu, theta, .. } = &mut op {
            *nu = vec![0.0, 0.0];
            *theta = vec![0.0, std::f64::consts::FRAC_PI_2];
        }
        let ev = koopman_eigenvalues(&op).unwrap();
        let e1 = (-1.0f64).exp();
        assert!((ev[0].0 - e1).abs() < 1e-15 && ev[0].1.abs() < 1e-15);
        assert!(ev[1].0.abs() < 1e-15 && (ev[1].1 - e1).abs() < 1e-15);
        let dense = KoopmanOperator::identity_like(OperatorKind::Dense, 2, 1.0);
        assert!(matches!(koopman_eigenvalues(&dense), Err(Error::Unsupported(_))));
    }

    #[test]
    fn moduli_in_unit_interval() {
        let mut rng = Rng::new(2);
        for _ in 0..20 {
            let mut op = KoopmanOperator::random(OperatorKind::Factorized, 16, 1.0, &mut rng);
            if let KoopmanOperator::Factorized { nu, .. } = &mut op {
                // Beyond this range the modulus rounds to exactly 0 or 1 in f64.
                nu.iter_mut().for_each(|v| *v = (*v * 3.0).clamp(-30.0, 5.0));
            }
            for (re, im) in koopman_eigenvalues(&op).unwrap() {
                let m = re.hypot(im);
                assert!(m > 0.0 && m < 1.0, "{m}");
            }
        }
    }

    #[test]
    fn shape_mismatch() {
        let op = KoopmanOperator::identity_like(OperatorKind::Dense, 3, 1.0);
        assert!(matches!(koopman_apply(&op, &[1.0]), Err(Error::Shape { .. })));
    }

    /// Central-difference check of the operator's backward pass on `L = Σ w ∘ out`.
    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = Rng::new(21);
        for kind in [OperatorKind::Dense, OperatorKind::Factorized] {
            let op = KoopmanOperator::random(kind, 5, 1.0, &mut rng);
            let z = Matrix::from_fn(3, 5, |_, _| rng.normal());
            let w = Matrix::from_fn(3, 5, |_, _| rng.normal());
            let loss = |op: &KoopmanOperator, z: &Matrix| -> f64 {
                let out = op.apply_batch(z).unwrap();
                out.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
            };
            let (_, tape) = op.apply_tape(&z).unwrap();
            let mut grads = op.zeros_like();
            let dz = op.backward(&z, tape.as_ref(), &w, &mut grads).unwrap();
            let h = 1e-6;
            let flat = grads.flatten();
            let mut k = 0;
            for (pi, len) in op.params().iter().map(|p| p.len()).enumerate() {
                for e in 0..len {
                    let mut plus = op.clone();
                    plus.params_mut()[pi][e] += h;
                    let mut minus = op.clone();
                    minus.params_mut()[pi][e] -= h;
                    let fd = (loss(&plus, &z) - loss(&minus, &z)) / (2.0 * h);
                    assert!((fd - flat[k]).abs() < 1e-6 * (1.0 + fd.abs()), "{kind} param {pi}[{e}]: {fd} vs {}", flat[k]);
                    k += 1;
                }
            }
            for e in 0..z.data().len() {
                let mut zp = z.clone();
                zp.data_mut()[e] += h;
                let mut zm = z.clone();
                zm.data_mut()[e] -= h;
                let fd = (loss(&op, &zp) - loss(&op, &zm)) / (2.0 * h);
                assert!((fd - dz.data()[e]).abs() < 1e-6 * (1.0 + fd.abs()));
            }
        }
    }
}
