//! Uniform lattices on cubes and nodal fields living on them.

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;

/// A cube of `cells` cells per axis and spacing `h` in α-coordinates,
/// mapped to physical coordinates by y = V α when a frame V is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    cells: usize,
    h: f64,
    origin: f64,
    periodic: bool,
    frame: Option<Matrix>,
}

impl Grid {
    /// Nodes at `origin + k h`, k = 0..=cells (or 0..cells when periodic).
    pub fn cube(dim: usize, cells: usize, h: f64, origin: f64, periodic: bool) -> Self {
        assert!(dim >= 1 && cells >= 1 && h > 0.0);
        Self {
            dim,
            cells,
            h,
            origin,
            periodic,
            frame: None,
        }
    }

    /// Columns of `frame` are the α-axes expressed in y-coordinates.
    pub fn with_frame(mut self, frame: Matrix) -> Self {
        assert_eq!((frame.rows(), frame.cols()), (self.dim, self.dim));
        self.frame = Some(frame);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells_per_axis(&self) -> usize {
        self.cells
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn frame(&self) -> Option<&Matrix> {
        self.frame.as_ref()
    }

    pub fn nodes_per_axis(&self) -> usize {
        if self.periodic {
            self.cells
        } else {
            self.cells + 1
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes_per_axis().pow(self.dim as u32)
    }

    pub fn num_cells(&self) -> usize {
        self.cells.pow(self.dim as u32)
    }

    /// Multi-index of a node, axis 0 fastest.
    pub fn node_multi(&self, mut idx: usize) -> Vec<usize> {
        let p = self.nodes_per_axis();
        (0..self.dim)
            .map(|_| {
                let i = idx % p;
                idx /= p;
                i
            })
            .collect()
    }

    pub fn node_index(&self, multi: &[usize]) -> usize {
        let p = self.nodes_per_axis();
        multi.iter().rev().fold(0, |acc, &i| acc * p + i % p)
    }

    /// α-coordinates of a node.
    pub fn node_alpha(&self, idx: usize) -> Vec<f64> {
        self.node_multi(idx)
            .into_iter()
            .map(|i| self.origin + i as f64 * self.h)
            .collect()
    }

    /// Physical coordinates y = V α.
    pub fn to_physical(&self, alpha: &[f64]) -> Vec<f64> {
        match &self.frame {
            None => alpha.to_vec(),
            Some(v) => (0..self.dim)
                .map(|i| (0..self.dim).map(|j| v.get(i, j) * alpha[j]).sum())
                .collect(),
        }
    }

    pub fn node_position(&self, idx: usize) -> Vec<f64> {
        self.to_physical(&self.node_alpha(idx))
    }

    /// Physical coordinates of the center of cell `c` (cells indexed like nodes
    /// of a `cells`-per-axis lattice).
    pub fn cell_center(&self, c: usize) -> Vec<f64> {
        let mut rest = c;
        let alpha: Vec<f64> = (0..self.dim)
            .map(|_| {
                let i = rest % self.cells;
                rest /= self.cells;
                self.origin + (i as f64 + 0.5) * self.h
            })
            .collect();
        self.to_physical(&alpha)
    }

    /// Node indices of the 2^N corners of cell `c`; bit j of the corner
    /// number selects the upper node along axis j.
    pub fn cell_corners(&self, c: usize, out: &mut [usize]) {
        let mut rest = c;
        let mut base = [0usize; 8];
        for b in base.iter_mut().take(self.dim) {
            *b = rest % self.cells;
            rest /= self.cells;
        }
        let p = self.nodes_per_axis();
        for (corner, slot) in out.iter_mut().enumerate().take(1 << self.dim) {
            let mut idx = 0;
            for j in (0..self.dim).rev() {
                let i = (base[j] + ((corner >> j) & 1)) % p;
                idx = idx * p + i;
            }
            *slot = idx;
        }
    }

    /// Whether the node lies on the boundary of a non-periodic cube.
    pub fn is_boundary(&self, idx: usize) -> bool {
        !self.periodic
            && self
                .node_multi(idx)
                .iter()
                .any(|&i| i == 0 || i == self.cells)
    }
}

/// Nodal values with `width` components per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    grid: Grid,
    width: usize,
    values: Vec<f64>,
}

impl GridField {
    pub fn zeros(grid: Grid, width: usize) -> Self {
        let values = vec![0.0; grid.num_nodes() * width];
        Self {
            grid,
            width,
            values,
        }
    }

    pub fn from_values(grid: Grid, width: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.num_nodes() * width);
        Self {
            grid,
            width,
            values,
        }
    }

    pub fn from_fn(grid: Grid, width: usize, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Self {
        let mut values = Vec::with_capacity(grid.num_nodes() * width);
        for i in 0..grid.num_nodes() {
            let v = f(&grid.node_position(i));
            assert_eq!(v.len(), width);
            values.extend(v);
        }
        Self {
            grid,
            width,
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn node(&self, idx: usize) -> &[f64] {
        &self.values[idx * self.width..(idx + 1) * self.width]
    }

    pub fn node_mut(&mut self, idx: usize) -> &mut [f64] {
        &mut self.values[idx * self.width..(idx + 1) * self.width]
    }

    /// Repeats the field `factor` times per axis onto a cube `factor` times
    /// larger with the same spacing; the origin is scaled as well.
    ///
    /// Dirichlet fields with matching boundary values tile continuously.
    pub fn tile(&self, factor: usize) -> GridField {
        let g = &self.grid;
        let mut big = Grid::cube(
            g.dim,
            g.cells * factor,
            g.h,
            g.origin * factor as f64,
            g.periodic,
        );
        if let Some(f) = &g.frame {
            big = big.with_frame(f.clone());
        }
        let mut out = GridField::zeros(big.clone(), self.width);
        for idx in 0..big.num_nodes() {
            let multi: Vec<usize> = big
                .node_multi(idx)
                .into_iter()
                .map(|i| {
                    if g.periodic {
                        i % g.cells
                    } else if i == g.cells * factor {
                        g.cells
                    } else {
                        i % g.cells
                    }
                })
                .collect();
            let src = g.node_index(&multi);
            out.node_mut(idx).copy_from_slice(self.node(src));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_roundtrip_and_corners() {
        let g = Grid::cube(2, 3, 0.5, 0.0, false);
        assert_eq!(g.num_nodes(), 16);
        for i in 0..16 {
            assert_eq!(g.node_index(&g.node_multi(i)), i);
        }
        let mut c = [0usize; 4];
        g.cell_corners(4, &mut c); // cell (1,1)
        assert_eq!(c, [5, 6, 9, 10]);
        assert!(g.is_boundary(0) && !g.is_boundary(5));
        let p = Grid::cube(2, 3, 0.5, 0.0, true);
        p.cell_corners(8, &mut c); // cell (2,2) wraps
        assert_eq!(c, [8, 6, 2, 0]);
    }

    #[test]
    fn tiling_preserves_values() {
        let g = Grid::cube(1, 4, 0.25, 0.0, false);
        let f = GridField::from_fn(g, 1, |y| vec![(std::f64::consts::PI * 4.0 * y[0]).sin().abs()]);
        let t = f.tile(3);
        assert_eq!(t.grid().num_nodes(), 13);
        for i in 0..13 {
            assert!((t.node(i)[0] - f.node(i % 4)[0]).abs() < 1e-15 || i % 4 == 0);
        }
    }

    #[test]
    fn frame_maps_alpha_to_y() {
        let v = Matrix::from_columns(&[vec![0.0, 1.0], vec![-1.0, 0.0]]);
        let g = Grid::cube(2, 2, 1.0, -1.0, false).with_frame(v);
        assert_eq!(g.node_position(0), vec![1.0, -1.0]);
    }
}
