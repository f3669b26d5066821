use std::collections::HashMap;
use std::io::Write;

use crate::error::{shape_err, Error, Result};
use crate::pairs::PairSet;

/// Neighbourhood radius for density-based outlier detection.
pub const DEFAULT_EPS: f64 = 0.15;
/// Neighbours (including the point itself) a core point needs.
pub const DEFAULT_MIN_PTS: usize = 4;

/// DBSCAN outcome: which points are noise, i.e. neither core nor within `eps` of a core
/// point.
#[derive(Clone, Debug, PartialEq)]
pub struct OutlierReport {
    pub eps: f64,
    pub min_pts: usize,
    pub outlier: Vec<bool>,
    /// Connected components of core points.
    pub clusters: usize,
}

impl OutlierReport {
    pub fn outlier_count(&self) -> usize {
        self.outlier.iter().filter(|&&o| o).count()
    }

    pub fn outlier_rate(&self) -> f64 {
        if self.outlier.is_empty() {
            0.0
        } else {
            self.outlier_count() as f64 / self.outlier.len() as f64
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "eps,min_pts,points,outliers,outlier_rate,clusters")?;
        writeln!(
            out,
            "{},{},{},{},{},{}",
            self.eps,
            self.min_pts,
            self.outlier.len(),
            self.outlier_count(),
            self.outlier_rate(),
            self.clusters
        )
    }
}

/// Density-based clustering with DBSCAN semantics. A point is core when at least
/// `min_pts` points (itself included) lie within distance `eps`; non-finite points are
/// always outliers. The result does not depend on the input order.
pub fn detect_outliers(points: &[[f64; 2]], eps: f64, min_pts: usize) -> Result<OutlierReport> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::Config(format!("eps must be positive, got {eps}")));
    }
    if min_pts == 0 {
        return Err(Error::Config("min_pts must be >= 1".into()));
    }
    let finite = |p: &[f64; 2]| p[0].is_finite() && p[1].is_finite();
    let key = |p: &[f64; 2]| ((p[0] / eps).floor() as i64, (p[1] / eps).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate().filter(|(_, p)| finite(p)) {
        grid.entry(key(p)).or_default().push(i);
    }
    let eps2 = eps * eps;
    let neighbours = |i: usize| -> Vec<usize> {
        let p = points[i];
        let (cx, cy) = key(&p);
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(cell) = grid.get(&(cx + dx, cy + dy)) {
                    out.extend(cell.iter().copied().filter(|&j| {
                        let q = points[j];
                        (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) <= eps2
                    }));
                }
            }
        }
        out
    };

    let n = points.len();
    let adjacency: Vec<Option<Vec<usize>>> = (0..n).map(|i| finite(&points[i]).then(|| neighbours(i))).collect();
    let core: Vec<bool> = adjacency.iter().map(|a| a.as_ref().is_some_and(|a| a.len() >= min_pts)).collect();

    let mut outlier = vec![true; n];
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in (0..n).filter(|&i| core[i]) {
        for &j in adjacency[i].as_ref().expect("core points are finite") {
            outlier[j] = false;
            if core[j] {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let clusters = (0..n).filter(|&i| core[i] && find(&mut parent, i) == i).count();
    Ok(OutlierReport {
        eps,
        min_pts,
        outlier,
        clusters,
    })
}

/// Summary statistics of one group of pairs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupStats {
    pub count: usize,
    /// Mean of `‖x_T‖ / prior_std`.
    pub mean_norm: f64,
    pub median_norm: f64,
    /// Mean percentile rank (0–100) of `‖x_T‖` within the whole set.
    pub mean_norm_percentile: f64,
    /// Mean distance of `x_0` to the nearest cell interface.
    pub mean_boundary_distance: f64,
}

/// Where outliers come from: noises in the tails of the prior and images near cell edges.
#[derive(Clone, Debug, PartialEq)]
pub struct ProvenanceReport {
    pub inliers: GroupStats,
    /// `None` when there are no outliers.
    pub outliers: Option<GroupStats>,
    /// Median percentile rank of the inliers' `‖x_T‖`.
    pub inlier_median_percentile: f64,
}

impl ProvenanceReport {
    /// Outliers' noises sit further into the prior tail: their mean percentile rank exceeds
    /// the median rank of the inliers.
    pub fn tail_cause(&self) -> bool {
        self.outliers
            .is_some_and(|o| o.mean_norm_percentile > self.inlier_median_percentile)
    }

    /// Outliers' images sit closer to cell interfaces than the inliers' on average.
    pub fn boundary_cause(&self) -> bool {
        self.outliers
            .is_some_and(|o| o.mean_boundary_distance < self.inliers.mean_boundary_distance)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "group,count,mean_norm,median_norm,mean_norm_percentile,mean_boundary_distance")?;
        let mut row = |name: &str, g: &GroupStats| {
            writeln!(
                out,
                "{name},{},{},{},{},{}",
                g.count, g.mean_norm, g.median_norm, g.mean_norm_percentile, g.mean_boundary_distance
            )
        };
        row("inlier", &self.inliers)?;
        match &self.outliers {
            Some(o) => row("outlier", o),
            None => writeln!(out, "outlier,0,,,,"),
        }
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Compares outlier and inlier pairs by prior-normalised noise norm and by how close
/// their images are to a cell interface.
pub fn outlier_provenance(pairs: &PairSet, report: &OutlierReport, prior_std: f64) -> Result<ProvenanceReport> {
    if report.outlier.len() != pairs.len() {
        return Err(shape_err("outlier mask", pairs.len(), report.outlier.len()));
    }
    if !(prior_std > 0.0) {
        return Err(Error::Config("prior_std must be positive".into()));
    }
    let n = pairs.len();
    let norms: Vec<f64> = pairs.pairs.iter().map(|p| p.x_t[0].hypot(p.x_t[1]) / prior_std).collect();
    // Percentile rank with ties at their mean position.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| norms[a].total_cmp(&norms[b]));
    let mut rank = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && norms[order[j + 1]] == norms[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0;
        for &o in &order[i..=j] {
            rank[o] = if n > 1 { 100.0 * mid / (n - 1) as f64 } else { 50.0 };
        }
        i = j + 1;
    }
    let spec = pairs.meta.data_spec;
    let group = |want: bool| -> Option<(GroupStats, Vec<f64>)> {
        let idx: Vec<usize> = (0..n).filter(|&i| report.outlier[i] == want).collect();
        if idx.is_empty() {
            return None;
        }
        let c = idx.len() as f64;
        let mut g_norms: Vec<f64> = idx.iter().map(|&i| norms[i]).collect();
        g_norms.sort_by(f64::total_cmp);
        let mut ranks: Vec<f64> = idx.iter().map(|&i| rank[i]).collect();
        ranks.sort_by(f64::total_cmp);
        Some((
            GroupStats {
                count: idx.len(),
                mean_norm: g_norms.iter().sum::<f64>() / c,
                median_norm: median(&g_norms),
                mean_norm_percentile: ranks.iter().sum::<f64>() / c,
                mean_boundary_distance: idx.iter().map(|&i| spec.boundary_distance(pairs.pairs[i].x_0)).sum::<f64>() / c,
            },
            ranks,
        ))
    };
    let (inliers, inlier_ranks) = group(false).ok_or_else(|| Error::Config("every pair is an outlier".into()))?;
    Ok(ProvenanceReport {
        inliers,
        outliers: group(true).map(|(g, _)| g),
        inlier_median_percentile: median(&inlier_ranks),
    })
}
