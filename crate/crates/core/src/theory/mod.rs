//! Numerical checks of the Koopman-approximation and semantic-proximity results:
//! EDMD on monomial liftings, spectral norms, and the Lipschitz chain inequality.

mod basis;
mod edmd;
mod norm;
mod proximity;

pub use basis::{monomial_lift, MonomialBasis};
pub use edmd::{edmd_fit, edmd_from_samples, edmd_sweep, sample_states, write_edmd_csv, EdmdConfig, EdmdReport};
pub use norm::{estimate_operator_norm, NormEstimate, NORM_MAX_ITER, NORM_TOL};
pub use proximity::{verify_semantic_proximity, Calibration, Lifting, ProximityConfig, ProximityReport};
