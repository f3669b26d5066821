use crate::error::{Error, Result};
use crate::exec::{map_chunks, ExecPolicy};
use crate::ndmath::Rng;

/// Point sets larger than this are subsampled before the pairwise sums.
pub const ENERGY_MAX_POINTS: usize = 5000;

const ROW_CHUNK: usize = 256;

/// Energy distance `2·E‖a − b‖ − E‖a − a′‖ − E‖b − b′‖` between two empirical
/// distributions, using all pairs (V-statistic, so the value is never negative).
///
/// Sets above [`ENERGY_MAX_POINTS`] are subsampled without replacement; the subset depends
/// only on `seed` and the set size, so identical inputs give identical subsets. The result
/// is exactly symmetric in its arguments.
pub fn energy_distance(a: &[[f64; 2]], b: &[[f64; 2]], seed: u64, policy: ExecPolicy) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Config("energy distance needs two nonempty point sets".into()));
    }
    let a = subsample(a, seed);
    let b = subsample(b, seed);
    // Floating-point addition is commutative, so averaging both cross orders and adding
    // the within terms as one sum makes ed(a, b) and ed(b, a) bitwise equal.
    let cross = (mean_distance(&a, &b, policy) + mean_distance(&b, &a, policy)) / 2.0;
    let within = mean_distance(&a, &a, policy) + mean_distance(&b, &b, policy);
    Ok((2.0 * cross - within).max(0.0))
}

fn subsample(points: &[[f64; 2]], seed: u64) -> Vec<[f64; 2]> {
    if points.len() <= ENERGY_MAX_POINTS {
        return points.to_vec();
    }
    let mut idx: Vec<usize> = (0..points.len()).collect();
    Rng::new(seed).shuffle(&mut idx);
    idx.truncate(ENERGY_MAX_POINTS);
    idx.sort_unstable();
    idx.into_iter().map(|i| points[i]).collect()
}

fn mean_distance(a: &[[f64; 2]], b: &[[f64; 2]], policy: ExecPolicy) -> f64 {
    let partial = map_chunks(policy, a.len(), ROW_CHUNK, |r| {
        a[r].iter()
            .map(|p| b.iter().map(|q| (p[0] - q[0]).hypot(p[1] - q[1])).sum::<f64>())
            .sum::<f64>()
    });
    partial.into_iter().sum::<f64>() / (a.len() as f64 * b.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(n: usize, shift: f64, seed: u64) -> Vec<[f64; 2]> {
        let mut rng = Rng::new(seed);
        (0..n).map(|_| [rng.normal() + shift, rng.normal()]).collect()
    }

    #[test]
    fn single_points_closed_form() {
        let d = energy_distance(&[[0.0, 0.0]], &[[3.0, 4.0]], 0, ExecPolicy::Sequential).unwrap();
        assert_eq!(d, 10.0);
    }

    #[test]
    fn identical_sets_give_zero() {
        let a = cloud(700, 0.0, 1);
        assert!(energy_distance(&a, &a, 3, ExecPolicy::Sequential).unwrap().abs() < 1e-12);
        let big = cloud(6000, 0.0, 2);
        assert!(energy_distance(&big, &big, 3, ExecPolicy::Sequential).unwrap().abs() < 1e-12);
    }

    #[test]
    fn symmetric_and_nonnegative() {
        let a = cloud(300, 0.0, 4);
        let b = cloud(450, 0.7, 5);
        let ab = energy_distance(&a, &b, 0, ExecPolicy::Sequential).unwrap();
        let ba = energy_distance(&b, &a, 0, ExecPolicy::Sequential).unwrap();
        assert_eq!(ab, ba);
        assert!(ab > 0.0);
        let same = energy_distance(&a, &cloud(300, 0.0, 6), 0, ExecPolicy::Sequential).unwrap();
        assert!(same >= 0.0 && same < ab);
    }

    #[test]
    fn policy_independent() {
        let a = cloud(1000, 0.0, 7);
        let b = cloud(900, 1.0, 8);
        assert_eq!(
            energy_distance(&a, &b, 1, ExecPolicy::Sequential).unwrap(),
            energy_distance(&a, &b, 1, ExecPolicy::Parallel).unwrap()
        );
    }

    #[test]
    fn empty_rejected() {
        assert!(matches!(
            energy_distance(&[], &[[0.0, 0.0]], 0, ExecPolicy::Sequential),
            Err(Error::Config(_))
        ));
    }
}
