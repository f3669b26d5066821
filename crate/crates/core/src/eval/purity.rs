use std::io::Write;

use crate::error::{shape_err, Error, Result};
use crate::exec::{map_chunks, ExecPolicy};
use crate::pairs::PairSet;

const ROW_CHUNK: usize = 256;

/// How strongly noise-space neighbourhoods share the cell of their images.
#[derive(Clone, Debug, PartialEq)]
pub struct StructureReport {
    pub k: usize,
    /// Points that took part (outside points excluded).
    pub points: usize,
    /// Mean fraction of each point's `k` nearest neighbours with the same cell.
    pub purity: f64,
    /// `1 / #distinct cells`.
    pub chance: f64,
}

impl StructureReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "k,points,purity,chance")?;
        writeln!(out, "{},{},{},{}", self.k, self.points, self.purity, self.chance)
    }
}

/// k-NN purity of a pair set: neighbours are found among the noises `x_T`, labels are the
/// cells of the images `x_0`. Pairs whose image lies outside every cell are excluded.
pub fn knn_purity(pairs: &PairSet, k: usize, policy: ExecPolicy) -> Result<StructureReport> {
    let spec = pairs.meta.data_spec;
    let (points, labels): (Vec<_>, Vec<_>) = pairs
        .pairs
        .iter()
        .filter_map(|p| spec.cell_of(p.x_0).map(|c| (p.x_t, c)))
        .unzip();
    knn_purity_points(&points, &labels, k, policy)
}

/// Exact brute-force k-NN purity over labelled points. Distance ties are broken by index.
pub fn knn_purity_points(points: &[[f64; 2]], labels: &[usize], k: usize, policy: ExecPolicy) -> Result<StructureReport> {
    if points.len() != labels.len() {
        return Err(shape_err("purity labels", points.len(), labels.len()));
    }
    if k == 0 || points.len() < k + 1 {
        return Err(Error::Config(format!("k-NN purity with k = {k} needs at least {} points", k + 1)));
    }
    let partial = map_chunks(policy, points.len(), ROW_CHUNK, |r| {
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        r.map(|i| {
            best.clear();
            let p = points[i];
            for (j, q) in points.iter().enumerate() {
                if j == i {
                    continue;
                }
                let d = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
                if best.len() == k && d >= best[k - 1].0 {
                    continue;
                }
                let at = best.partition_point(|&(bd, _)| bd <= d);
                best.insert(at, (d, j));
                best.truncate(k);
            }
            best.iter().filter(|&&(_, j)| labels[j] == labels[i]).count() as f64 / k as f64
        })
        .sum::<f64>()
    });
    let purity = partial.into_iter().sum::<f64>() / points.len() as f64;
    let mut distinct = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    Ok(StructureReport {
        k,
        points: points.len(),
        purity,
        chance: 1.0 / distinct.len() as f64,
    })
}
