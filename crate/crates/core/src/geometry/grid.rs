//! Uniform grid over a parameter-space box with CSR cell buckets.
//!
//! Used twice: bucketing Monte Carlo samples (so a new kernel only visits the
//! samples inside its bounding box) and bucketing kernels (so a membership
//! query only tests the kernels registered in one cell).

use super::ParameterSpace;

#[derive(Debug, Clone)]
pub(crate) struct UniformGrid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    inv_width: Vec<f64>,
    cells: Vec<usize>,
    strides: Vec<usize>,
    total: usize,
}

impl UniformGrid {
    pub(crate) fn new(space: &ParameterSpace, cells_per_dim: &[usize]) -> Self {
        let m = space.dims();
        debug_assert_eq!(cells_per_dim.len(), m);
        let cells: Vec<usize> = cells_per_dim.iter().map(|&c| c.max(1)).collect();
        let inv_width = (0..m)
            .map(|j| cells[j] as f64 / (space.upper()[j] - space.lower()[j]))
            .collect();
        let mut strides = vec![1usize; m];
        for j in 1..m {
            strides[j] = strides[j - 1] * cells[j - 1];
        }
        let total = cells.iter().product();
        UniformGrid {
            lower: space.lower().to_vec(),
            upper: space.upper().to_vec(),
            inv_width,
            cells,
            strides,
            total,
        }
    }

    /// Splits `target_cells` evenly over the axes.
    pub(crate) fn balanced(space: &ParameterSpace, target_cells: usize) -> Self {
        let m = space.dims();
        let per_dim = ((target_cells.max(1) as f64).powf(1.0 / m as f64).floor() as usize).max(1);
        Self::new(space, &vec![per_dim; m])
    }

    /// Cells sized to roughly one kernel diameter per axis, with the total
    /// capped at `max_cells`.
    pub(crate) fn for_extent(space: &ParameterSpace, half_widths: &[f64], max_cells: usize) -> Self {
        let m = space.dims();
        let mut desired: Vec<f64> = (0..m)
            .map(|j| {
                let extent = space.upper()[j] - space.lower()[j];
                (extent / (2.0 * half_widths[j])).ceil().clamp(1.0, 1e9)
            })
            .collect();
        let product: f64 = desired.iter().product();
        let cap = max_cells.max(1) as f64;
        if product > cap {
            let shrink = (cap / product).powf(1.0 / m as f64);
            for d in &mut desired {
                *d = (*d * shrink).floor().max(1.0);
            }
        }
        let cells: Vec<usize> = desired.iter().map(|&d| d as usize).collect();
        Self::new(space, &cells)
    }

    pub(crate) fn len(&self) -> usize {
        self.total
    }

    /// Cell index along axis `j`, clamped into the grid. Monotone in `x`.
    #[inline]
    fn axis_cell(&self, j: usize, x: f64) -> usize {
        let t = ((x - self.lower[j]) * self.inv_width[j]).floor();
        if t >= 1.0 {
            (t as usize).min(self.cells[j] - 1)
        } else {
            0
        }
    }

    #[inline]
    pub(crate) fn cell_of(&self, x: &[f64]) -> usize {
        x.iter()
            .enumerate()
            .map(|(j, &v)| self.axis_cell(j, v) * self.strides[j])
            .sum()
    }

    /// Visits every cell intersecting the box `[lo, hi]`. Boxes lying wholly
    /// outside the grid on some axis visit nothing.
    pub(crate) fn for_each_cell_in_box(&self, lo: &[f64], hi: &[f64], mut visit: impl FnMut(usize)) {
        let m = self.cells.len();
        let mut first = Vec::with_capacity(m);
        let mut last = Vec::with_capacity(m);
        for j in 0..m {
            if hi[j] < self.lower[j] || lo[j] > self.upper[j] {
                return;
            }
            first.push(self.axis_cell(j, lo[j]));
            last.push(self.axis_cell(j, hi[j]));
        }
        let mut current = first.clone();
        loop {
            let index: usize = current.iter().zip(&self.strides).map(|(c, s)| c * s).sum();
            visit(index);
            // odometer increment
            let mut axis = 0;
            loop {
                if axis == m {
                    return;
                }
                if current[axis] < last[axis] {
                    current[axis] += 1;
                    break;
                }
                current[axis] = first[axis];
                axis += 1;
            }
        }
    }
}

/// Compressed per-cell item lists.
#[derive(Debug, Clone)]
pub(crate) struct CellBuckets {
    starts: Vec<usize>,
    items: Vec<u32>,
}

impl CellBuckets {
    pub(crate) fn from_pairs(cell_count: usize, pairs: &[(usize, u32)]) -> Self {
        let mut starts = vec![0usize; cell_count + 1];
        for &(cell, _) in pairs {
            starts[cell + 1] += 1;
        }
        for c in 0..cell_count {
            starts[c + 1] += starts[c];
        }
        let mut fill = starts.clone();
        let mut items = vec![0u32; pairs.len()];
        for &(cell, item) in pairs {
            items[fill[cell]] = item;
            fill[cell] += 1;
        }
        CellBuckets { starts, items }
    }

    #[inline]
    pub(crate) fn cell(&self, cell: usize) -> &[u32] {
        &self.items[self.starts[cell]..self.starts[cell + 1]]
    }
}
