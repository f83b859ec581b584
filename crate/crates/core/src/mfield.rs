//! Minimization over M-valued nodal fields with fixed boundary nodes:
//! tangent-projected quasi-Newton steps followed by nodewise projection.

use crate::density::PointDensity;
use crate::discrete::Discretization;
use crate::grid::Grid;
use crate::manifold::ManifoldHandle;
use crate::optim::{minimize, Objective, OptimConfig, OptimReport};
use crate::precond::{LaplaceBoundary, SpectralPreconditioner};

pub(crate) struct ManifoldProblem<'a, L: PointDensity> {
    pub grid: &'a Grid,
    pub manifold: &'a ManifoldHandle,
    pub locals: Vec<L>,
    /// Cell weight (h^N times the normalization).
    pub weight: f64,
    pub fixed: Vec<bool>,
}

struct ManifoldObjective<'a, L: PointDensity> {
    disc: Discretization<'a, L>,
    manifold: &'a ManifoldHandle,
    precond: SpectralPreconditioner,
    d: usize,
}

impl<L: PointDensity> ManifoldObjective<'_, L> {
    fn tangent(&self, x: &[f64], v: &mut [f64]) {
        for (node, fixed) in self.disc.fixed.iter().enumerate() {
            let r = node * self.d..(node + 1) * self.d;
            if *fixed {
                v[r].iter_mut().for_each(|c| *c = 0.0);
            } else {
                self.manifold.tangent_project_vec(&x[r.clone()], &mut v[r]);
            }
        }
    }
}

impl<L: PointDensity> Objective for ManifoldObjective<'_, L> {
    fn smoothed(&self, x: &[f64], mu: f64, grad: &mut [f64]) -> f64 {
        let e = self.disc.energy(x, Some(mu), Some(grad));
        self.tangent(x, grad);
        e
    }

    fn smoothed_value(&self, x: &[f64], mu: f64) -> f64 {
        self.disc.energy(x, Some(mu), None)
    }

    fn exact(&self, x: &[f64]) -> f64 {
        self.disc.energy(x, None, None)
    }

    fn retract(&self, x: &mut [f64]) {
        for (node, fixed) in self.disc.fixed.iter().enumerate() {
            if !*fixed {
                self.manifold
                    .project_in_place(&mut x[node * self.d..(node + 1) * self.d]);
            }
        }
    }

    fn precondition(&self, v: &mut [f64]) {
        self.precond.apply(v);
    }

    fn project_direction(&self, x: &[f64], d: &mut [f64]) {
        self.tangent(x, d);
    }

    fn grad_norm(&self, g: &[f64]) -> f64 {
        (g.iter().map(|v| v * v).sum::<f64>() / self.disc.weight).sqrt()
    }
}

impl<L: PointDensity> ManifoldProblem<'_, L> {
    /// Minimizes from `x0` (on M, boundary nodes already set). Returns the
    /// best iterate and the optimizer report.
    pub fn solve(self, x0: Vec<f64>, cfg: &OptimConfig, grad_tol: f64) -> (Vec<f64>, OptimReport) {
        let grid = self.grid;
        let manifold = self.manifold;
        let d = manifold.ambient_dim();
        let disc = self.discretization();
        let all_boundary_fixed = (0..grid.num_nodes()).all(|i| !grid.is_boundary(i) || disc.fixed[i]);
        let boundary = if all_boundary_fixed {
            LaplaceBoundary::Dirichlet
        } else {
            LaplaceBoundary::Neumann
        };
        let obj = ManifoldObjective {
            precond: SpectralPreconditioner::new(grid, d, boundary),
            disc,
            manifold,
            d,
        };
        minimize(&obj, x0, cfg, grad_tol)
    }

    /// Unsmoothed discrete energy of `x`.
    pub fn energy(self, x: &[f64]) -> f64 {
        self.discretization().energy(x, None, None)
    }

    fn discretization<'a>(self) -> Discretization<'a, L>
    where
        Self: 'a,
    {
        let d = self.manifold.ambient_dim();
        let n = self.grid.dim();
        Discretization {
            grid: self.grid,
            width: d,
            rows: d,
            lift: None,
            affine: vec![0.0; d * n],
            arc: Some(self.manifold),
            locals: self.locals,
            weight: self.weight,
            fixed: self.fixed,
        }
    }
}
