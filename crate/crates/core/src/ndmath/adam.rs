use super::Parameters;
use crate::error::{Error, Result};

/// Bias-corrected Adam with per-parameter first and second moments.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    /// Zeroed state shaped like `params`, with β1 = 0.9, β2 = 0.999, ε = 1e-8.
    pub fn new<P: Parameters + ?Sized>(params: &P) -> Self {
        Self::with_betas(params, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas<P: Parameters + ?Sized>(params: &P, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.params().iter().map(|p| vec![0.0; p.len()]).collect();
        AdamState {
            first_moment: zeros.clone(),
            second_moment: zeros,
            step_count: 0,
            beta1,
            beta2,
            eps,
        }
    }

    /// One update of `params` along `grads`. Nothing is modified if any gradient entry is
    /// non-finite.
    pub fn step<P: Parameters + ?Sized>(&mut self, params: &mut P, grads: &P, lr: f64) -> Result<()> {
        if !(lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        let g = grads.params();
        if g.len() != self.first_moment.len()
            || g.iter().zip(&self.first_moment).any(|(a, b)| a.len() != b.len())
        {
            return Err(crate::error::shape_err(
                "AdamState::step",
                "gradients shaped like the optimizer state",
                "mismatched parameter list",
            ));
        }
        if let Some(i) = g.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFiniteGradient {
                param: grads.param_names()[i].clone(),
            });
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for (((p, g), m), v) in params
            .params_mut()
            .into_iter()
            .zip(g)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Free-function form of [`AdamState::step`].
pub fn adam_step<P: Parameters + ?Sized>(
    params: &mut P,
    grads: &P,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    state.step(params, grads, lr)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A bag of named scalars for optimizer tests.
    struct Scalars(Vec<f64>);

    impl Parameters for Scalars {
        fn params(&self) -> Vec<&[f64]> {
            vec![&self.0]
        }
        fn params_mut(&mut self) -> Vec<&mut [f64]> {
            vec![&mut self.0]
        }
        fn param_names(&self) -> Vec<String> {
            vec!["theta".into()]
        }
    }

    #[test]
    fn first_step_is_signed_lr() {
        let mut p = Scalars(vec![1.0, 1.0]);
        let g = Scalars(vec![0.5, -3.0]);
        let mut st = AdamState::new(&p);
        st.step(&mut p, &g, 1e-3).unwrap();
        let expect0 = 1.0 - 1e-3 * 0.5 / (0.5 + 1e-8);
        let expect1 = 1.0 + 1e-3 * 3.0 / (3.0 + 1e-8);
        assert!((p.0[0] - expect0).abs() < 1e-15);
        assert!((p.0[1] - expect1).abs() < 1e-15);
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn zero_grad_first_step_leaves_params() {
        let mut p = Scalars(vec![0.3]);
        let mut st = AdamState::new(&p);
        st.step(&mut p, &Scalars(vec![0.0]), 0.1).unwrap();
        assert_eq!(p.0[0], 0.3);
    }

    #[test]
    fn two_step_trace_by_hand() {
        let (lr, b1, b2, eps) = (0.01, 0.9, 0.999, 1e-8);
        let mut p = Scalars(vec![2.0]);
        let mut st = AdamState::new(&p);
        st.step(&mut p, &Scalars(vec![0.4]), lr).unwrap();
        st.step(&mut p, &Scalars(vec![-0.2]), lr).unwrap();

        // Hand recurrence.
        let mut x = 2.0f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        for (t, g) in [(1, 0.4f64), (2, -0.2f64)] {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            x -= lr * mh / (vh.sqrt() + eps);
        }
        assert!((p.0[0] - x).abs() < 1e-15);
        // Closed form: the first step moves by ~lr, the second by lr * m̂ / sqrt(v̂).
        let m2: f64 = 0.9 * 0.04 + 0.1 * -0.2;
        let v2: f64 = 0.999 * 0.000_16 + 0.001 * 0.04;
        let x2 = 2.0 - 0.01 * 1.0 - 0.01 * (m2 / 0.19) / ((v2 / (1.0 - 0.999f64.powi(2))).sqrt() + eps);
        assert!((p.0[0] - x2).abs() < 1e-9);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = Scalars(vec![0.0]);
        let mut st = AdamState::new(&p);
        let err = st.step(&mut p, &Scalars(vec![f64::NAN]), 0.1).unwrap_err();
        assert!(err.to_string().contains("theta"));
        assert_eq!(st.step_count, 0);
    }

    #[test]
    fn rejects_non_positive_lr() {
        let mut p = Scalars(vec![0.0]);
        let mut st = AdamState::new(&p);
        assert!(st.step(&mut p, &Scalars(vec![1.0]), 0.0).is_err());
    }
}
