//! Dense linear algebra, SiLU networks with reverse-mode gradients, Adam and least squares.

mod adam;
mod lstsq;
mod matrix;
mod mlp;
mod rng;

pub use adam::{adam_step, AdamState};
pub use lstsq::{lstsq, DEFAULT_RIDGE};
pub use matrix::Matrix;
pub(crate) use matrix::gemm;
pub use mlp::{mlp_backward, mlp_forward, silu, silu_grad, sinusoidal_embedding, Dense, Mlp, MlpTape};
pub use rng::Rng;

/// A model whose trainable state is a fixed, ordered list of flat `f64` buffers.
///
/// The gradient of a model is represented by a zeroed copy of the same type, so
/// `params()` of the gradient lines up with `params()` of the model.
pub trait Parameters {
    fn params(&self) -> Vec<&[f64]>;
    fn params_mut(&mut self) -> Vec<&mut [f64]>;
    /// Names in the same order as [`Parameters::params`].
    fn param_names(&self) -> Vec<String>;

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// `self += scale * other`.
    fn add_scaled(&mut self, other: &Self, scale: f64)
    where
        Self: Sized,
    {
        for (dst, src) in self.params_mut().into_iter().zip(other.params()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    fn all_finite(&self) -> bool {
        self.params().iter().all(|p| p.iter().all(|v| v.is_finite()))
    }

    /// Concatenation of every buffer, in order.
    fn flatten(&self) -> Vec<f64> {
        self.params().concat()
    }
}
