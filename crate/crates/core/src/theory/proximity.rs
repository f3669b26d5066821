use std::fmt;
use std::io::Write;

use super::{estimate_operator_norm, sample_states, EdmdConfig, MonomialBasis};
use crate::error::{shape_err, Error, Result};
use crate::ndmath::{lstsq, Matrix, Rng};

/// Coordinates in which the proximity inequality is evaluated.
#[derive(Clone, Debug, PartialEq)]
pub enum Lifting {
    Identity,
    Monomial(MonomialBasis),
}

impl Lifting {
    pub fn lift(&self, x: &Matrix) -> Result<Matrix> {
        match self {
            Lifting::Identity => Ok(x.clone()),
            Lifting::Monomial(b) => b.lift_batch(x),
        }
    }
}

/// Where the Lipschitz estimate comes from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Calibration {
    /// From a separate calibration set of pairs.
    #[default]
    Disjoint,
    /// From the evaluation pairs themselves; with the identity lifting no pair can then
    /// violate the bound, which makes this a self-test of the harness.
    Evaluation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProximityConfig {
    pub calibration_pairs: usize,
    pub eval_pairs: usize,
    /// Maximum distance between the two noises of a pair.
    pub radius: f64,
    /// Standard deviation of the Gaussian the first noise of each pair is drawn from.
    pub prior_std: f64,
    pub lifting: Lifting,
    /// Sample count and ridge for the fit of the lifted operator `C_T`.
    pub edmd: EdmdConfig,
    pub calibration: Calibration,
}

impl Default for ProximityConfig {
    fn default() -> Self {
        ProximityConfig {
            calibration_pairs: 10_000,
            eval_pairs: 10_000,
            radius: 0.5,
            prior_std: 1.0,
            lifting: Lifting::Identity,
            edmd: EdmdConfig::default(),
            calibration: Calibration::Disjoint,
        }
    }
}

impl ProximityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) {
            return Err(Error::Config(format!("radius must be positive, got {}", self.radius)));
        }
        if !(self.prior_std > 0.0) {
            return Err(Error::Config("prior_std must be positive".into()));
        }
        if self.eval_pairs == 0 || (self.calibration == Calibration::Disjoint && self.calibration_pairs == 0) {
            return Err(Error::Config("proximity check needs calibration and evaluation pairs".into()));
        }
        if self.edmd.samples == 0 {
            return Err(Error::Config("operator fit needs samples".into()));
        }
        Ok(())
    }
}

/// Outcome of checking `‖x₀¹ − x₀²‖ ≤ L̂ · max(1, ‖C_T‖) · ‖ξ(x_T¹) − ξ(x_T²)‖`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProximityReport {
    /// Evaluation pairs actually scored.
    pub pairs: usize,
    /// Pairs skipped because the two noises (or their liftings) coincide.
    pub degenerate: usize,
    /// `L̂`: largest observed `‖Φ(x¹) − Φ(x²)‖ / ‖x¹ − x²‖`.
    pub lipschitz: f64,
    /// Spectral norm of the fitted lifted operator `C_T`.
    pub operator_norm: f64,
    pub norm_converged: bool,
    /// `L̂ · max(1, ‖C_T‖)`.
    pub chain_constant: f64,
    pub violation_rate: f64,
    /// Violation rate of the bound with `L̂ · ‖C_T‖` (no clamp).
    pub unclamped_violation_rate: f64,
    /// Largest `‖Δx₀‖ / (chain_constant · ‖Δξ‖)`; above 1 means a violation.
    pub worst_ratio: f64,
}

impl fmt::Display for ProximityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "pairs            {}", self.pairs)?;
        writeln!(f, "degenerate       {}", self.degenerate)?;
        writeln!(f, "lipschitz        {:.6}", self.lipschitz)?;
        writeln!(f, "operator_norm    {:.6}{}", self.operator_norm, if self.norm_converged { "" } else { " (not converged)" })?;
        writeln!(f, "chain_constant   {:.6}", self.chain_constant)?;
        writeln!(f, "violation_rate   {:.6}", self.violation_rate)?;
        writeln!(f, "unclamped_rate   {:.6}", self.unclamped_violation_rate)?;
        write!(f, "worst_ratio      {:.6}", self.worst_ratio)
    }
}

impl ProximityReport {
    /// Two-line CSV (header and values).
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "pairs,degenerate,lipschitz,operator_norm,chain_constant,violation_rate,unclamped_violation_rate,worst_ratio"
        )?;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            self.pairs,
            self.degenerate,
            self.lipschitz,
            self.operator_norm,
            self.chain_constant,
            self.violation_rate,
            self.unclamped_violation_rate,
            self.worst_ratio
        )
    }
}

struct PairBatch {
    /// `‖Φ(x¹) − Φ(x²)‖ / ‖x¹ − x²‖`, `None` for degenerate pairs.
    state_ratio: Vec<Option<f64>>,
    /// `‖Φ(x¹) − Φ(x²)‖ / ‖ξ(x¹) − ξ(x²)‖`.
    lifted_ratio: Vec<Option<f64>>,
}

fn draw_pairs(n: usize, dim: usize, cfg: &ProximityConfig, rng: &mut Rng) -> (Matrix, Matrix) {
    let mut a = Matrix::zeros(n, dim);
    let mut b = Matrix::zeros(n, dim);
    let mut dir = vec![0.0; dim];
    for i in 0..n {
        rng.fill_normal(a.row_mut(i), cfg.prior_std);
        rng.fill_normal(&mut dir, 1.0);
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        // Uniform in the ball: radius ∝ U^(1/n).
        let r = cfg.radius * rng.uniform().powf(1.0 / dim as f64);
        let scale = if norm > 0.0 { r / norm } else { 0.0 };
        for (j, d) in dir.iter().enumerate() {
            b.set(i, j, a.get(i, j) + scale * d);
        }
    }
    (a, b)
}

fn row_dist(a: &Matrix, b: &Matrix, i: usize) -> f64 {
    a.row(i).iter().zip(b.row(i)).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
}

fn evaluate_pairs<F>(phi: &F, lifting: &Lifting, x1: &Matrix, x2: &Matrix) -> Result<PairBatch>
where
    F: Fn(&Matrix) -> Result<Matrix>,
{
    let y1 = phi(x1)?;
    let y2 = phi(x2)?;
    if y1.shape() != x1.shape() || y2.shape() != x2.shape() {
        return Err(shape_err("proximity map image", format!("{:?}", x1.shape()), format!("{:?}", y1.shape())));
    }
    let l1 = lifting.lift(x1)?;
    let l2 = lifting.lift(x2)?;
    let mut state_ratio = Vec::with_capacity(x1.rows());
    let mut lifted_ratio = Vec::with_capacity(x1.rows());
    for i in 0..x1.rows() {
        let dx = row_dist(x1, x2, i);
        let dl = row_dist(&l1, &l2, i);
        let dy = row_dist(&y1, &y2, i);
        if dx == 0.0 || dl == 0.0 || !dy.is_finite() {
            state_ratio.push(None);
            lifted_ratio.push(None);
        } else {
            state_ratio.push(Some(dy / dx));
            lifted_ratio.push(Some(dy / dl));
        }
    }
    Ok(PairBatch {
        state_ratio,
        lifted_ratio,
    })
}

/// Checks the semantic-proximity chain inequality for the end map `phi_t`
/// (one state per row in, one image per row out).
///
/// `L̂` is the maximal state-space expansion over the calibration pairs, and `C_T` is a
/// least-squares fit of `ξ(Φ(x)) ≈ C_T ξ(x)` on fresh prior samples. The norm factor is
/// clamped at 1, since for any `‖C_T‖ < 1` the unclamped bound is stricter than the
/// Lipschitz bound itself and fails even for exact linear contractions.
pub fn verify_semantic_proximity<F>(phi_t: F, dim: usize, cfg: &ProximityConfig, rng: &mut Rng) -> Result<ProximityReport>
where
    F: Fn(&Matrix) -> Result<Matrix>,
{
    cfg.validate()?;
    if let Lifting::Monomial(b) = &cfg.lifting {
        if b.dim() != dim {
            return Err(shape_err("proximity lifting", dim, b.dim()));
        }
    }

    let edmd_cfg = EdmdConfig {
        sample_std: cfg.prior_std,
        ..cfg.edmd.clone()
    };
    let xs = sample_states(dim, &edmd_cfg, rng);
    let ys = phi_t(&xs)?;
    let c_t = lstsq(&cfg.lifting.lift(&xs)?, &cfg.lifting.lift(&ys)?, edmd_cfg.ridge)?.transpose();
    let norm = estimate_operator_norm(&c_t);

    let (e1, e2) = draw_pairs(cfg.eval_pairs, dim, cfg, rng);
    let eval = evaluate_pairs(&phi_t, &cfg.lifting, &e1, &e2)?;
    let calib = match cfg.calibration {
        Calibration::Disjoint => {
            let (c1, c2) = draw_pairs(cfg.calibration_pairs, dim, cfg, rng);
            evaluate_pairs(&phi_t, &cfg.lifting, &c1, &c2)?.state_ratio
        }
        Calibration::Evaluation => eval.state_ratio.clone(),
    };
    let lipschitz = calib.iter().flatten().fold(0.0f64, |m, &r| m.max(r));

    let chain_constant = lipschitz * norm.value.max(1.0);
    let unclamped = lipschitz * norm.value;
    let scored: Vec<f64> = eval.lifted_ratio.iter().flatten().copied().collect();
    let pairs = scored.len();
    let degenerate = cfg.eval_pairs - pairs;
    let rate = |bound: f64| {
        if pairs == 0 {
            0.0
        } else {
            scored.iter().filter(|&&r| r > bound).count() as f64 / pairs as f64
        }
    };
    let worst = scored.iter().fold(0.0f64, |m, &r| m.max(r));
    Ok(ProximityReport {
        pairs,
        degenerate,
        lipschitz,
        operator_norm: norm.value,
        norm_converged: norm.converged,
        chain_constant,
        violation_rate: rate(chain_constant),
        unclamped_violation_rate: rate(unclamped),
        worst_ratio: if chain_constant > 0.0 { worst / chain_constant } else { f64::INFINITY },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scaled(x: &Matrix, s: f64) -> Matrix {
        let mut y = x.clone();
        y.scale(s);
        y
    }

    fn small(calibration: Calibration) -> ProximityConfig {
        ProximityConfig {
            calibration_pairs: 2000,
            eval_pairs: 2000,
            edmd: EdmdConfig {
                samples: 1000,
                ..EdmdConfig::default()
            },
            calibration,
            ..ProximityConfig::default()
        }
    }

    #[test]
    fn identity_map_has_unit_constants_and_no_violations() {
        let r = verify_semantic_proximity(|x: &Matrix| Ok(x.clone()), 2, &small(Calibration::Disjoint), &mut Rng::new(1))
            .unwrap();
        assert!((r.lipschitz - 1.0).abs() < 1e-12);
        assert!((r.operator_norm - 1.0).abs() < 1e-9);
        assert_eq!(r.violation_rate, 0.0);
        assert_eq!(r.pairs, 2000);
    }

    #[test]
    fn contraction_is_exact() {
        let r = verify_semantic_proximity(|x: &Matrix| Ok(scaled(x, 0.5)), 2, &small(Calibration::Disjoint), &mut Rng::new(2))
            .unwrap();
        assert!((r.lipschitz - 0.5).abs() < 1e-12);
        assert!((r.operator_norm - 0.5).abs() < 1e-9);
        assert_eq!(r.violation_rate, 0.0);
        // Without the clamp the bound 0.25‖Δx‖ fails for every pair.
        assert_eq!(r.unclamped_violation_rate, 1.0);
    }

    #[test]
    fn self_calibration_never_violates() {
        let phi = |x: &Matrix| {
            Ok(Matrix::from_fn(x.rows(), 2, |i, j| {
                let (a, b) = (x.get(i, 0), x.get(i, 1));
                if j == 0 { (3.0 * a).sin() + b * b } else { (a * b).tanh() }
            }))
        };
        let r = verify_semantic_proximity(phi, 2, &small(Calibration::Evaluation), &mut Rng::new(3)).unwrap();
        assert_eq!(r.violation_rate, 0.0);
        assert!(r.worst_ratio <= 1.0);
    }

    #[test]
    fn degenerate_pairs_are_counted() {
        let cfg = ProximityConfig {
            radius: 1e-300,
            ..small(Calibration::Disjoint)
        };
        let r = verify_semantic_proximity(|x: &Matrix| Ok(x.clone()), 2, &cfg, &mut Rng::new(4)).unwrap();
        assert_eq!(r.pairs + r.degenerate, 2000);
        assert!(r.degenerate > 1900);
    }

    #[test]
    fn monomial_lifting_and_report_output() {
        let cfg = ProximityConfig {
            lifting: Lifting::Monomial(MonomialBasis::new(2, 2).unwrap()),
            ..small(Calibration::Disjoint)
        };
        let r = verify_semantic_proximity(|x: &Matrix| Ok(scaled(x, 0.9)), 2, &cfg, &mut Rng::new(5)).unwrap();
        assert!(r.violation_rate <= 1.0 && r.unclamped_violation_rate <= 1.0);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 2);
        assert!(r.to_string().contains("violation_rate"));
        let bad = ProximityConfig {
            lifting: Lifting::Monomial(MonomialBasis::new(3, 2).unwrap()),
            ..small(Calibration::Disjoint)
        };
        assert!(verify_semantic_proximity(|x: &Matrix| Ok(x.clone()), 2, &bad, &mut Rng::new(5)).is_err());
    }

    #[test]
    fn rejects_bad_radius() {
        let cfg = ProximityConfig {
            radius: 0.0,
            ..ProximityConfig::default()
        };
        assert!(verify_semantic_proximity(|x: &Matrix| Ok(x.clone()), 2, &cfg, &mut Rng::new(0)).is_err());
    }
}
