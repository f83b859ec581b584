//! Discrete energies Σ_cells w · mean_corners F_c(ξ + L ∇_h u Vᵀ).
//!
//! Each cell averages its density over the 2^N corner gradients (one
//! forward difference when N = 1). For manifold-valued fields every edge
//! difference q − p is rescaled by the arc/chord ratio, so a jump across a
//! single cell costs the geodesic distance.

use crate::density::PointDensity;
use crate::grid::Grid;
use crate::linalg::{self, Matrix};
use crate::manifold::ManifoldHandle;

pub(crate) struct Discretization<'a, L: PointDensity> {
    pub grid: &'a Grid,
    /// Components per node.
    pub width: usize,
    /// Rows of the density argument.
    pub rows: usize,
    /// d×width lift of nodal differences (tangent basis); identity if None.
    pub lift: Option<Matrix>,
    /// Constant slope added to the lifted gradient (rows × N).
    pub affine: Vec<f64>,
    pub arc: Option<&'a ManifoldHandle>,
    pub locals: Vec<L>,
    /// Weight of a cell: h^N / normalization.
    pub weight: f64,
    pub fixed: Vec<bool>,
}

/// Index tables shared by all cells.
struct Tables {
    /// Edge slot used along axis j by each corner (`corner * n + j`).
    corner_slots: Vec<usize>,
    /// (lower, upper) corner numbers of each edge slot.
    edge_ends: Vec<(usize, usize)>,
}

impl<'a, L: PointDensity> Discretization<'a, L> {
    fn n(&self) -> usize {
        self.grid.dim()
    }

    fn edges_per_axis(&self) -> usize {
        1 << (self.n() - 1)
    }

    /// Gradient-corner count used in the cell average.
    fn corner_count(&self) -> usize {
        if self.n() == 1 {
            1
        } else {
            1 << self.n()
        }
    }

    /// Index into the edge table of the edge along axis j through corner b.
    fn edge_slot(&self, j: usize, corner: usize) -> usize {
        let low = corner & ((1 << j) - 1);
        let high = (corner >> (j + 1)) << j;
        j * self.edges_per_axis() + (low | high)
    }

    /// Endpoints (lower, upper) of edge `r` along axis j in corner numbering.
    fn edge_corners(j: usize, r: usize) -> (usize, usize) {
        let low = r & ((1 << j) - 1);
        let high = (r >> j) << (j + 1);
        let lo = low | high;
        (lo, lo | (1 << j))
    }

    fn tables(&self) -> Tables {
        let n = self.n();
        let ne = self.edges_per_axis();
        Tables {
            corner_slots: (0..self.corner_count())
                .flat_map(|c| (0..n).map(move |j| (c, j)))
                .map(|(c, j)| self.edge_slot(j, c))
                .collect(),
            edge_ends: (0..n)
                .flat_map(|j| (0..ne).map(move |r| Self::edge_corners(j, r)))
                .collect(),
        }
    }

    /// Energy of `x`; smoothed with parameter `mu` when given, writing the
    /// gradient into `grad` (zero on fixed nodes).
    pub fn energy(&self, x: &[f64], mu: Option<f64>, mut grad: Option<&mut [f64]>) -> f64 {
        let n = self.n();
        let w = self.width;
        let rows = self.rows;
        let inv_h = 1.0 / self.grid.spacing();
        let tables = self.tables();
        let nslots = tables.edge_ends.len();
        let corners = self.corner_count();
        let inv_corners = 1.0 / corners as f64;
        // Row-major V and column-major lift.
        let frame: Option<Vec<f64>> = self
            .grid
            .frame()
            .map(|v| (0..n * n).map(|k| v.get(k / n, k % n)).collect());
        let lift = self.lift.as_ref().map(|t| t.as_slice());

        let mut node_ids = vec![0usize; 1 << n];
        let mut raw = vec![0.0; nslots * w];
        let mut rho = vec![0.0; nslots];
        let mut le = vec![0.0; nslots * rows];
        let mut g_le = vec![0.0; nslots * rows];
        let mut arg = vec![0.0; rows * n];
        let mut g_arg = vec![0.0; rows * n];
        let mut ge = vec![0.0; w];

        if let Some(g) = grad.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut total = 0.0;
        for c in 0..self.grid.num_cells() {
            self.grid.cell_corners(c, &mut node_ids);
            for (slot, &(lo, hi)) in tables.edge_ends.iter().enumerate() {
                let (p, q) = (node_ids[lo] * w, node_ids[hi] * w);
                let e = &mut raw[slot * w..(slot + 1) * w];
                let mut sq = 0.0;
                for k in 0..w {
                    e[k] = x[q + k] - x[p + k];
                    sq += e[k] * e[k];
                }
                let scale = match self.arc {
                    Some(m) => m.chord_arc(sq.sqrt()).0 * inv_h,
                    None => inv_h,
                };
                rho[slot] = scale;
                let out = &mut le[slot * rows..(slot + 1) * rows];
                match lift {
                    None => {
                        for k in 0..w {
                            out[k] = e[k] * scale;
                        }
                    }
                    Some(t) => {
                        out.iter_mut().for_each(|v| *v = 0.0);
                        for k in 0..w {
                            let ck = e[k] * scale;
                            for (o, tv) in out.iter_mut().zip(&t[k * rows..(k + 1) * rows]) {
                                *o += ck * tv;
                            }
                        }
                    }
                }
            }
            let local = &self.locals[c];
            let mut cell = 0.0;
            if grad.is_some() {
                g_le.iter_mut().for_each(|v| *v = 0.0);
            }
            for corner in 0..corners {
                let sl = &tables.corner_slots[corner * n..(corner + 1) * n];
                arg.copy_from_slice(&self.affine);
                for i in 0..n {
                    let col = &mut arg[i * rows..(i + 1) * rows];
                    match &frame {
                        None => {
                            let src = &le[sl[i] * rows..(sl[i] + 1) * rows];
                            for (a, b) in col.iter_mut().zip(src) {
                                *a += b;
                            }
                        }
                        Some(v) => {
                            for j in 0..n {
                                let vij = v[i * n + j];
                                if vij != 0.0 {
                                    let src = &le[sl[j] * rows..(sl[j] + 1) * rows];
                                    for (a, b) in col.iter_mut().zip(src) {
                                        *a += vij * b;
                                    }
                                }
                            }
                        }
                    }
                }
                match (mu, grad.is_some()) {
                    (Some(mu), true) => {
                        cell += local.smoothed(&arg, mu, &mut g_arg);
                        for j in 0..n {
                            let dst = &mut g_le[sl[j] * rows..(sl[j] + 1) * rows];
                            match &frame {
                                None => {
                                    for (d, g) in dst.iter_mut().zip(&g_arg[j * rows..(j + 1) * rows]) {
                                        *d += inv_corners * g;
                                    }
                                }
                                Some(v) => {
                                    for i in 0..n {
                                        let vij = v[i * n + j] * inv_corners;
                                        if vij != 0.0 {
                                            for (d, g) in dst.iter_mut().zip(&g_arg[i * rows..(i + 1) * rows]) {
                                                *d += vij * g;
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                    (Some(mu), false) => cell += local.smoothed(&arg, mu, &mut g_arg),
                    (None, _) => cell += local.value(&arg),
                }
            }
            total += self.weight * cell * inv_corners;
            if let Some(g) = grad.as_deref_mut() {
                for (slot, &(lo, hi)) in tables.edge_ends.iter().enumerate() {
                    let (p, q) = (node_ids[lo] * w, node_ids[hi] * w);
                    let src = &g_le[slot * rows..(slot + 1) * rows];
                    // Lᵀ
                    match lift {
                        None => ge.copy_from_slice(src),
                        Some(t) => {
                            for k in 0..w {
                                ge[k] = linalg::dot(&t[k * rows..(k + 1) * rows], src);
                            }
                        }
                    }
                    let e = &raw[slot * w..(slot + 1) * w];
                    let scale = rho[slot];
                    // d(scale(e) e)/de
                    let proj = match self.arc {
                        Some(m) => {
                            let chord = linalg::norm(e);
                            if chord > 0.0 {
                                m.chord_arc(chord).1 * inv_h / chord * linalg::dot(e, &ge)
                            } else {
                                0.0
                            }
                        }
                        None => 0.0,
                    };
                    for k in 0..w {
                        let v = self.weight * (scale * ge[k] + proj * e[k]);
                        g[q + k] += v;
                        g[p + k] -= v;
                    }
                }
            }
        }
        if let Some(g) = grad {
            for (i, fixed) in self.fixed.iter().enumerate() {
                if *fixed {
                    g[i * w..(i + 1) * w].iter_mut().for_each(|v| *v = 0.0);
                }
            }
        }
        total
    }
}
