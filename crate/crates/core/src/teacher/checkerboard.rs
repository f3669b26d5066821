use crate::error::{Error, Result};
use crate::ndmath::Rng;

/// The 2D checkerboard distribution on `[-extent, extent]²`.
///
/// Cell `(row, col)` spans `y ∈ [-extent + row·side, …]`, `x ∈ [-extent + col·side, …]` with
/// `side = 2·extent / grid`. Occupied cells are the ones with odd `row + col`; they are
/// numbered in row-major order, so row `r` holds indices `r·grid/2 .. (r+1)·grid/2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckerboardSpec {
    pub grid: usize,
    pub extent: f64,
}

impl Default for CheckerboardSpec {
    fn default() -> Self {
        CheckerboardSpec {
            grid: 4,
            extent: 4.0,
        }
    }
}

impl CheckerboardSpec {
    pub fn new(grid: usize, extent: f64) -> Result<Self> {
        let spec = CheckerboardSpec { grid, extent };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid < 2 || !self.grid.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "checkerboard grid must be even and >= 2, got {}",
                self.grid
            )));
        }
        if !(self.extent > 0.0) || !self.extent.is_finite() {
            return Err(Error::Config(format!(
                "checkerboard extent must be positive, got {}",
                self.extent
            )));
        }
        Ok(())
    }

    pub fn side(&self) -> f64 {
        2.0 * self.extent / self.grid as f64
    }

    /// Per-coordinate standard deviation of the distribution. Every row and column holds
    /// the same number of occupied cells, so each marginal is uniform on `[-extent, extent]`.
    pub fn marginal_std(&self) -> f64 {
        self.extent / 3f64.sqrt()
    }

    pub fn num_cells(&self) -> usize {
        self.grid * self.grid / 2
    }

    /// `(row, col)` of occupied cell `index`.
    pub fn cell_position(&self, index: usize) -> (usize, usize) {
        let per_row = self.grid / 2;
        let row = index / per_row;
        let k = index % per_row;
        // Odd rows start occupied at column 0, even rows at column 1.
        let col = 2 * k + usize::from(row.is_multiple_of(2));
        (row, col)
    }

    pub fn cell_center(&self, index: usize) -> [f64; 2] {
        let (row, col) = self.cell_position(index);
        let side = self.side();
        [
            -self.extent + (col as f64 + 0.5) * side,
            -self.extent + (row as f64 + 0.5) * side,
        ]
    }

    /// Uniform sample from one occupied cell.
    pub fn sample_in_cell(&self, index: usize, rng: &mut Rng) -> [f64; 2] {
        let (row, col) = self.cell_position(index);
        let side = self.side();
        [
            -self.extent + (col as f64 + rng.uniform()) * side,
            -self.extent + (row as f64 + rng.uniform()) * side,
        ]
    }

    /// One uniform sample from the union of occupied cells, with its cell index.
    pub fn sample_one(&self, rng: &mut Rng) -> ([f64; 2], usize) {
        let cell = rng.below(self.num_cells());
        (self.sample_in_cell(cell, rng), cell)
    }

    /// Occupied cell strictly containing `p`, or `None` (unoccupied cell, outside the
    /// extent, or exactly on a grid line).
    pub fn cell_of(&self, p: [f64; 2]) -> Option<usize> {
        let side = self.side();
        let axis = |v: f64| -> Option<usize> {
            let u = (v + self.extent) / side;
            if !(u > 0.0 && u < self.grid as f64) {
                return None;
            }
            let c = u.floor();
            if u == c {
                return None;
            }
            Some(c as usize)
        };
        let col = axis(p[0])?;
        let row = axis(p[1])?;
        if (row + col) % 2 == 1 {
            Some(row * (self.grid / 2) + col / 2)
        } else {
            None
        }
    }

    /// Distance from `p` to the nearest grid segment inside the extent (every segment
    /// separates an occupied cell from an unoccupied cell or from the outside).
    pub fn boundary_distance(&self, p: [f64; 2]) -> f64 {
        let side = self.side();
        let e = self.extent;
        let nearest_line = |v: f64| -> f64 {
            let k = ((v + e) / side).round().clamp(0.0, self.grid as f64);
            -e + k * side
        };
        let dist_to_family = |a: f64, b: f64| -> f64 {
            // Lines perpendicular to axis `a`, spanning [-e, e] along axis `b`.
            let da = a - nearest_line(a);
            let db = (b.abs() - e).max(0.0);
            da.hypot(db)
        };
        dist_to_family(p[0], p[1]).min(dist_to_family(p[1], p[0]))
    }
}

/// `n` uniform samples from the occupied cells, with their cell labels.
pub fn sample_checkerboard(spec: &CheckerboardSpec, n: usize, rng: &mut Rng) -> (Vec<[f64; 2]>, Vec<usize>) {
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let (p, c) = spec.sample_one(rng);
        points.push(p);
        labels.push(c);
    }
    (points, labels)
}
