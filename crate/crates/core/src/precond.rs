//! Inverse of the constant-coefficient grid Laplacian, applied through
//! separable eigenbases. Seeds the quasi-Newton metric so that iteration
//! counts do not grow with the grid resolution.

use std::f64::consts::PI;
use std::sync::Arc;

use rustdct::rustfft::num_complex::Complex;
use rustdct::rustfft::{Fft, FftPlanner};
use rustdct::{DctPlanner, Dst1, TransformType2And3};

use crate::grid::Grid;

/// Boundary behaviour of the Laplacian along every axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LaplaceBoundary {
    /// First and last nodes are fixed.
    Dirichlet,
    Periodic,
    /// Free end nodes.
    Neumann,
}

pub(crate) struct SpectralPreconditioner {
    dim: usize,
    nodes: usize,
    width: usize,
    boundary: LaplaceBoundary,
    /// Transform length per axis.
    len: usize,
    /// 1D eigenvalues (divided by h²) in transform order.
    eig: Vec<f64>,
    shift: f64,
    dst1: Option<Arc<dyn Dst1<f64>>>,
    dct2: Option<Arc<dyn TransformType2And3<f64>>>,
    fft: Option<(Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>)>,
}

/// Calls `f` on every line of a tensor along `axis`; the fastest index is
/// the component (`width` of them), then axis 0, 1, ...
fn for_each_line<T: Copy + Default>(
    data: &mut [T],
    len: usize,
    dim: usize,
    width: usize,
    axis: usize,
    mut f: impl FnMut(&mut [T]),
) {
    let inner = width * len.pow(axis as u32);
    let outer = len.pow((dim - axis - 1) as u32);
    let mut line = vec![T::default(); len];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * inner * len + i;
            for (k, slot) in line.iter_mut().enumerate() {
                *slot = data[base + k * inner];
            }
            f(&mut line);
            for (k, v) in line.iter().enumerate() {
                data[base + k * inner] = *v;
            }
        }
    }
}

impl SpectralPreconditioner {
    pub fn new(grid: &Grid, width: usize, boundary: LaplaceBoundary) -> Self {
        let p = grid.nodes_per_axis();
        let h2 = grid.spacing() * grid.spacing();
        let mut planner = DctPlanner::new();
        let (len, eig) = match boundary {
            LaplaceBoundary::Dirichlet => {
                let m = p - 1;
                let e = (1..m)
                    .map(|k| (2.0 - 2.0 * (PI * k as f64 / m as f64).cos()) / h2)
                    .collect::<Vec<_>>();
                (m - 1, e)
            }
            LaplaceBoundary::Periodic => (
                p,
                (0..p)
                    .map(|k| (2.0 - 2.0 * (2.0 * PI * k as f64 / p as f64).cos()) / h2)
                    .collect(),
            ),
            LaplaceBoundary::Neumann => (
                p,
                (0..p)
                    .map(|k| (2.0 - 2.0 * (PI * k as f64 / p as f64).cos()) / h2)
                    .collect(),
            ),
        };
        // Zero modes (constants) get the smallest positive eigenvalue.
        let shift = eig
            .iter()
            .cloned()
            .filter(|v| *v > 1e-9 / h2)
            .fold(f64::INFINITY, f64::min);
        let shift = if shift.is_finite() { shift } else { 1.0 / h2 };
        let (mut dst1, mut dct2, mut fft) = (None, None, None);
        if len > 0 {
            match boundary {
                LaplaceBoundary::Dirichlet => dst1 = Some(planner.plan_dst1(len)),
                LaplaceBoundary::Neumann => dct2 = Some(planner.plan_dct2(len)),
                LaplaceBoundary::Periodic => {
                    let mut fp = FftPlanner::new();
                    fft = Some((fp.plan_fft_forward(len), fp.plan_fft_inverse(len)));
                }
            }
        }
        Self {
            dim: grid.dim(),
            nodes: p,
            width,
            boundary,
            len,
            eig,
            shift,
            dst1,
            dct2,
            fft,
        }
    }

    fn eigenvalue(&self, mut idx: usize) -> f64 {
        idx /= self.width;
        let mut lam = 0.0;
        for _ in 0..self.dim {
            lam += self.eig[idx % self.len];
            idx /= self.len;
        }
        if lam > 1e-9 * self.shift {
            lam
        } else {
            self.shift
        }
    }

    /// v ← L⁻¹ v (componentwise).
    pub fn apply(&self, v: &mut [f64]) {
        if self.len == 0 {
            v.iter_mut().for_each(|x| *x = 0.0);
            return;
        }
        let (dim, width, len) = (self.dim, self.width, self.len);
        match self.boundary {
            LaplaceBoundary::Dirichlet => {
                let plan = self.dst1.as_ref().unwrap();
                // Interior sub-tensor.
                let total = len.pow(dim as u32) * width;
                let mut data = vec![0.0; total];
                let map = |idx: usize| -> usize {
                    let comp = idx % width;
                    let mut rest = idx / width;
                    let mut node = 0;
                    let mut stride = 1;
                    for _ in 0..dim {
                        node += (rest % len + 1) * stride;
                        stride *= self.nodes;
                        rest /= len;
                    }
                    node * width + comp
                };
                for (i, d) in data.iter_mut().enumerate() {
                    *d = v[map(i)];
                }
                let mut scratch = vec![0.0; plan.get_scratch_len()];
                for axis in 0..dim {
                    for_each_line(&mut data, len, dim, width, axis, |l| {
                        plan.process_dst1_with_scratch(l, &mut scratch)
                    });
                }
                let norm = (2.0 / (len + 1) as f64).powi(dim as i32);
                for (i, d) in data.iter_mut().enumerate() {
                    *d *= norm / self.eigenvalue(i);
                }
                for axis in 0..dim {
                    for_each_line(&mut data, len, dim, width, axis, |l| {
                        plan.process_dst1_with_scratch(l, &mut scratch)
                    });
                }
                v.iter_mut().for_each(|x| *x = 0.0);
                for (i, d) in data.iter().enumerate() {
                    v[map(i)] = *d;
                }
            }
            LaplaceBoundary::Neumann => {
                let plan = self.dct2.as_ref().unwrap();
                let mut scratch = vec![0.0; plan.get_scratch_len()];
                for axis in 0..dim {
                    for_each_line(v, len, dim, width, axis, |l| {
                        plan.process_dct2_with_scratch(l, &mut scratch)
                    });
                }
                let norm = (2.0 / len as f64).powi(dim as i32);
                for i in 0..v.len() {
                    v[i] *= norm / self.eigenvalue(i);
                }
                for axis in 0..dim {
                    for_each_line(v, len, dim, width, axis, |l| {
                        plan.process_dct3_with_scratch(l, &mut scratch)
                    });
                }
            }
            LaplaceBoundary::Periodic => {
                let (fwd, inv) = self.fft.as_ref().unwrap();
                let mut data: Vec<Complex<f64>> = v.iter().map(|x| Complex::new(*x, 0.0)).collect();
                for axis in 0..dim {
                    for_each_line(&mut data, len, dim, width, axis, |l| fwd.process(l));
                }
                let norm = 1.0 / (len as f64).powi(dim as i32);
                for (i, d) in data.iter_mut().enumerate() {
                    *d *= norm / self.eigenvalue(i);
                }
                for axis in 0..dim {
                    for_each_line(&mut data, len, dim, width, axis, |l| inv.process(l));
                }
                for (x, d) in v.iter_mut().zip(&data) {
                    *x = d.re;
                }
            }
        }
    }
}
