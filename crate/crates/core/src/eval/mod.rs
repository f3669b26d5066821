//! Sample-quality and structure metrics: energy distance, noise-space k-NN purity,
//! DBSCAN outliers and their provenance, perturbation sweeps, teacher–student agreement,
//! and dependency-free SVG plots.

mod agreement;
mod energy;
mod outliers;
mod purity;
mod svg;
mod sweep;

pub use agreement::{agreement, derangement, AgreementReport};
pub use energy::{energy_distance, ENERGY_MAX_POINTS};
pub use outliers::{
    detect_outliers, outlier_provenance, GroupStats, OutlierReport, ProvenanceReport, DEFAULT_EPS, DEFAULT_MIN_PTS,
};
pub use purity::{knn_purity, knn_purity_points, StructureReport};
pub use svg::{line_svg, scatter_svg, Bounds, OUTSIDE_COLOR, PALETTE};
pub use sweep::{perturbation_sweep, SweepResult, DEFAULT_SWEEP_SIGMAS};

/// Rows of a two-column matrix as points.
pub fn to_points(m: &crate::ndmath::Matrix) -> Vec<[f64; 2]> {
    (0..m.rows()).map(|i| [m.get(i, 0), m.get(i, 1)]).collect()
}
