//! Corrector problems on growing cells: Tf_hom, its recession and the
//! periodic cell formula for (g^∞)_hom.

use serde::{Deserialize, Serialize};

use crate::density::DensityField;
use crate::discrete::Discretization;
use crate::error::{Error, Result};
use crate::grid::{Grid, GridField};
use crate::integrand::{ExtendedIntegrand, Integrand};
use crate::linalg::{self, Matrix};
use crate::manifold::{ManifoldHandle, ManifoldPoint};
use crate::optim::{minimize, Objective, OptimConfig};
use crate::precond::{LaplaceBoundary, SpectralPreconditioner};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryMode {
    DirichletZero,
    Periodic,
}

/// Density minimized in the cell.
#[derive(Debug, Clone)]
pub enum CellDensity {
    Bulk(Integrand),
    Recession(Integrand),
    /// g or g^∞ at the frozen state `s` of the cell problem.
    Extended {
        g: ExtendedIntegrand,
        recession: bool,
    },
}

impl CellDensity {
    fn target_dim(&self) -> usize {
        match self {
            CellDensity::Bulk(f) | CellDensity::Recession(f) => f.target_dim(),
            CellDensity::Extended { g, .. } => g.base().target_dim(),
        }
    }

    fn space_dim(&self) -> usize {
        match self {
            CellDensity::Bulk(f) | CellDensity::Recession(f) => f.space_dim(),
            CellDensity::Extended { g, .. } => g.base().space_dim(),
        }
    }
}

/// Values taken by the corrector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorrectorSpace {
    /// T_s(M), represented in an orthonormal basis.
    Tangent,
    /// All of R^d.
    Ambient,
}

#[derive(Debug, Clone)]
pub struct CellProblemSpec {
    pub density: CellDensity,
    pub manifold: ManifoldHandle,
    pub basepoint: Vec<f64>,
    /// d×N slope.
    pub slope: Matrix,
    pub space: CorrectorSpace,
    pub t: usize,
    pub n: usize,
    pub boundary: BoundaryMode,
    pub optim: OptimConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellSolution {
    /// Unsmoothed average energy of the returned corrector.
    pub value: f64,
    pub value_mu: f64,
    pub value_half_mu: f64,
    /// Ambient nodal values of φ.
    pub corrector: GridField,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub value: f64,
    /// (t, value_t) pairs.
    pub trace: Vec<(f64, f64)>,
    pub upper_bound: bool,
    pub error_estimate: f64,
    pub converged: bool,
    /// Largest |value(μ) − value(μ/2)| along the trace.
    pub smoothing_gap: f64,
}

/// Resolution, t-schedule and optimizer settings of the cell solves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellConfig {
    pub n: usize,
    pub schedule: Vec<usize>,
    pub optim: OptimConfig,
}

impl CellConfig {
    /// n = 64 for N = 1, 32 otherwise; t ∈ {1, 2, 4, 8}.
    pub fn default_for(space_dim: usize) -> Self {
        Self {
            n: if space_dim == 1 { 64 } else { 32 },
            schedule: vec![1, 2, 4, 8],
            optim: OptimConfig::default(),
        }
    }
}

struct LinearObjective<'a, L: crate::density::PointDensity> {
    disc: Discretization<'a, L>,
    precond: SpectralPreconditioner,
}

impl<L: crate::density::PointDensity> Objective for LinearObjective<'_, L> {
    fn smoothed(&self, x: &[f64], mu: f64, grad: &mut [f64]) -> f64 {
        self.disc.energy(x, Some(mu), Some(grad))
    }

    fn smoothed_value(&self, x: &[f64], mu: f64) -> f64 {
        self.disc.energy(x, Some(mu), None)
    }

    fn exact(&self, x: &[f64]) -> f64 {
        self.disc.energy(x, None, None)
    }

    fn precondition(&self, v: &mut [f64]) {
        self.precond.apply(v);
    }

    fn grad_norm(&self, g: &[f64]) -> f64 {
        (g.iter().map(|v| v * v).sum::<f64>() / self.disc.weight).sqrt()
    }
}

fn validate(spec: &CellProblemSpec) -> Result<()> {
    let d = spec.density.target_dim();
    let n = spec.density.space_dim();
    if spec.slope.rows() != d || spec.slope.cols() != n {
        return Err(Error::Dimension(format!(
            "slope is {}×{}, expected {d}×{n}",
            spec.slope.rows(),
            spec.slope.cols()
        )));
    }
    if spec.manifold.ambient_dim() != d || spec.basepoint.len() != d {
        return Err(Error::Dimension("manifold, basepoint and integrand disagree on d".into()));
    }
    if spec.n < 4 || spec.t < 1 {
        return Err(Error::InvalidInput(format!(
            "cell needs n ≥ 4 and t ≥ 1, got n = {}, t = {}",
            spec.n, spec.t
        )));
    }
    if spec.space == CorrectorSpace::Tangent {
        if spec.manifold.distance_to(&spec.basepoint) > 1e-9 {
            return Err(Error::InvalidInput("basepoint is not on the manifold".into()));
        }
        let mut proj = spec.slope.clone();
        for j in 0..n {
            spec.manifold
                .tangent_project_vec(&spec.basepoint, proj.column_mut(j));
        }
        if proj.sub(&spec.slope).norm() > 1e-10 * (1.0 + spec.slope.norm()) {
            return Err(Error::InvalidInput("slope is not tangent at the basepoint".into()));
        }
    }
    Ok(())
}

fn cell_grid(spec: &CellProblemSpec) -> Grid {
    let dim = spec.density.space_dim();
    Grid::cube(
        dim,
        spec.t * spec.n,
        1.0 / spec.n as f64,
        0.0,
        spec.boundary == BoundaryMode::Periodic,
    )
}

fn run<F: DensityField>(
    spec: &CellProblemSpec,
    field: F,
    init: Option<&GridField>,
) -> Result<CellSolution> {
    let grid = cell_grid(spec);
    let d = spec.density.target_dim();
    let dim = grid.dim();
    let (lift, width, basis) = match spec.space {
        CorrectorSpace::Tangent => {
            let basis = spec.manifold.tangent_basis(&spec.basepoint);
            let k = basis.len();
            (Some(Matrix::from_columns(&basis)), k, Some(basis))
        }
        CorrectorSpace::Ambient => (None, d, None),
    };
    let disc = Discretization {
        grid: &grid,
        width,
        rows: d,
        lift,
        affine: spec.slope.as_slice().to_vec(),
        arc: None,
        locals: (0..grid.num_cells())
            .map(|c| field.local(&grid.cell_center(c)))
            .collect(),
        weight: (1.0 / (spec.n * spec.t) as f64).powi(dim as i32) ,
        fixed: (0..grid.num_nodes()).map(|i| grid.is_boundary(i)).collect(),
    };
    // Unknowns are coordinates in the corrector space.
    let x0 = match init {
        None => vec![0.0; grid.num_nodes() * width],
        Some(f) => {
            if f.grid().num_nodes() != grid.num_nodes() || f.width() != d {
                return Err(Error::Dimension("initial corrector does not match the cell".into()));
            }
            match &basis {
                None => f.values().to_vec(),
                Some(b) => f
                    .values()
                    .chunks(d)
                    .flat_map(|v| b.iter().map(move |e| linalg::dot(e, v)))
                    .collect(),
            }
        }
    };
    let scale = 1.0 + spec.slope.norm();
    let boundary = match spec.boundary {
        BoundaryMode::DirichletZero => LaplaceBoundary::Dirichlet,
        BoundaryMode::Periodic => LaplaceBoundary::Periodic,
    };
    let precond = SpectralPreconditioner::new(&grid, width, boundary);
    let obj = LinearObjective { disc, precond };
    // Warm starts are already near the target scale; a short continuation suffices.
    let mu_start = if init.is_some() {
        16.0 * spec.optim.mu
    } else {
        spec.optim.mu_start * scale
    };
    let cfg = OptimConfig {
        mu_start,
        ..spec.optim.clone()
    };
    let (x, rep) = minimize(&obj, x0, &cfg, spec.optim.grad_tol * scale);
    let values: Vec<f64> = match &basis {
        None => x,
        Some(b) => x
            .chunks(width)
            .flat_map(|c| {
                let mut v = vec![0.0; d];
                for (coef, e) in c.iter().zip(b) {
                    linalg::axpy(*coef, e, &mut v);
                }
                v
            })
            .collect(),
    };
    Ok(CellSolution {
        value: rep.value,
        value_mu: rep.value_mu,
        value_half_mu: rep.value_half_mu,
        corrector: GridField::from_values(grid, d, values),
        iterations: rep.iterations,
        converged: rep.converged,
        grad_norm: rep.grad_norm,
    })
}

/// Minimizes the discrete cell average of the density at ξ + ∇φ from a zero
/// corrector.
pub fn solve_cell(spec: &CellProblemSpec) -> Result<CellSolution> {
    solve_cell_from(spec, None)
}

/// As [`solve_cell`], starting from `init` (ambient nodal values).
pub fn solve_cell_from(spec: &CellProblemSpec, init: Option<&GridField>) -> Result<CellSolution> {
    validate(spec)?;
    match &spec.density {
        CellDensity::Bulk(f) => run(spec, f.field(), init),
        CellDensity::Recession(f) => run(spec, f.recession_field(), init),
        CellDensity::Extended { g, recession } => run(spec, g.at(&spec.basepoint, *recession), init),
    }
}

/// Solves along the t-schedule, warm-starting each cell from the tiled
/// previous corrector when the multiplier grows by an integer factor.
fn schedule_trace(
    base: &CellProblemSpec,
    schedule: &[usize],
) -> Result<(Vec<(f64, f64)>, bool, f64)> {
    if schedule.is_empty() || schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidSchedule("t-schedule must be non-empty and increasing".into()));
    }
    let mut trace = Vec::with_capacity(schedule.len());
    let mut converged = true;
    let mut gap: f64 = 0.0;
    let mut prev: Option<(usize, GridField)> = None;
    for &t in schedule {
        let spec = CellProblemSpec {
            t,
            ..base.clone()
        };
        let init = match &prev {
            Some((tp, field)) if t % tp == 0 => Some(field.tile(t / tp)),
            _ => None,
        };
        let sol = solve_cell_from(&spec, init.as_ref())?;
        converged &= sol.converged;
        gap = gap.max((sol.value_mu - sol.value_half_mu).abs());
        trace.push((t as f64, sol.value));
        prev = Some((t, sol.corrector));
    }
    Ok((trace, converged, gap))
}

fn estimate_from_trace(trace: Vec<(f64, f64)>, converged: bool, gap: f64) -> DensityEstimate {
    let value = trace.last().unwrap().1;
    let error_estimate = if trace.len() >= 2 {
        (value - trace[trace.len() - 2].1).abs()
    } else {
        0.0
    };
    DensityEstimate {
        value,
        trace,
        upper_bound: true,
        error_estimate,
        converged,
        smoothing_gap: gap,
    }
}

fn tangent_spec(
    density: CellDensity,
    m: &ManifoldHandle,
    s: &ManifoldPoint,
    xi: &Matrix,
    cfg: &CellConfig,
) -> CellProblemSpec {
    CellProblemSpec {
        density,
        manifold: m.clone(),
        basepoint: s.coords().to_vec(),
        slope: xi.clone(),
        space: CorrectorSpace::Tangent,
        t: 1,
        n: cfg.n,
        boundary: BoundaryMode::DirichletZero,
        optim: cfg.optim.clone(),
    }
}

/// Tf_hom(s, ξ): Dirichlet cell values along the doubling schedule; the
/// estimate is the value at the largest t.
pub fn tf_hom(
    f: &Integrand,
    m: &ManifoldHandle,
    s: &ManifoldPoint,
    xi: &Matrix,
    cfg: &CellConfig,
) -> Result<DensityEstimate> {
    let spec = tangent_spec(CellDensity::Bulk(f.clone()), m, s, xi, cfg);
    let (trace, converged, gap) = schedule_trace(&spec, &cfg.schedule)?;
    Ok(estimate_from_trace(trace, converged, gap))
}

/// T(f^∞)_hom(s, ξ): as [`tf_hom`] with the recession density.
pub fn tf_of_recession_hom(
    f: &Integrand,
    m: &ManifoldHandle,
    s: &ManifoldPoint,
    xi: &Matrix,
    cfg: &CellConfig,
) -> Result<DensityEstimate> {
    let spec = tangent_spec(CellDensity::Recession(f.clone()), m, s, xi, cfg);
    let (trace, converged, gap) = schedule_trace(&spec, &cfg.schedule)?;
    Ok(estimate_from_trace(trace, converged, gap))
}

/// Default scales {8, 16, …, 1024} of the recession estimate.
pub fn default_recession_scales() -> Vec<f64> {
    (3..=10).map(|k| 2f64.powi(k)).collect()
}

/// Tf^∞_hom(s, ξ) = limsup_t Tf_hom(s, tξ)/t: maximum of the last three
/// ratios along `scales`. The trace holds (t, Tf_hom(s, tξ)/t).
pub fn tf_hom_recession(
    f: &Integrand,
    m: &ManifoldHandle,
    s: &ManifoldPoint,
    xi: &Matrix,
    scales: &[f64],
    cfg: &CellConfig,
) -> Result<DensityEstimate> {
    if scales.is_empty() || scales.windows(2).any(|w| w[1] <= w[0]) || scales[0] <= 0.0 {
        return Err(Error::InvalidSchedule("recession scales must be positive and increasing".into()));
    }
    if xi.norm() == 0.0 {
        return Ok(DensityEstimate {
            value: 0.0,
            trace: scales.iter().map(|&t| (t, 0.0)).collect(),
            upper_bound: true,
            error_estimate: 0.0,
            converged: true,
            smoothing_gap: 0.0,
        });
    }
    let mut trace = Vec::with_capacity(scales.len());
    let mut converged = true;
    let mut gap: f64 = 0.0;
    for &t in scales {
        let est = tf_hom(f, m, s, &xi.scaled(t), cfg)?;
        converged &= est.converged;
        gap = gap.max(est.smoothing_gap / t);
        trace.push((t, est.value / t));
    }
    let tail = &trace[trace.len().saturating_sub(3)..];
    let value = tail.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let lo = tail.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    Ok(DensityEstimate {
        value,
        trace,
        upper_bound: false,
        error_estimate: value - lo,
        converged,
        smoothing_gap: gap,
    })
}

/// (g^∞)_hom(s, ξ) by the periodic cell formula: infimum over the period
/// multipliers in `cfg.schedule` of periodic R^d-valued corrector problems.
pub fn ginf_hom_periodic(
    g: &ExtendedIntegrand,
    s: &[f64],
    xi: &Matrix,
    cfg: &CellConfig,
) -> Result<DensityEstimate> {
    let spec = CellProblemSpec {
        density: CellDensity::Extended {
            g: g.clone(),
            recession: true,
        },
        manifold: g.manifold().clone(),
        basepoint: s.to_vec(),
        slope: xi.clone(),
        space: CorrectorSpace::Ambient,
        t: 1,
        n: cfg.n,
        boundary: BoundaryMode::Periodic,
        optim: cfg.optim.clone(),
    };
    let (trace, converged, gap) = schedule_trace(&spec, &cfg.schedule)?;
    let value = trace.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let mut est = estimate_from_trace(trace, converged, gap);
    est.value = value;
    Ok(est)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityViolation {
    pub lambda: f64,
    /// Amount by which the value exceeds the chord through its neighbours.
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub lambdas: Vec<f64>,
    pub values: Vec<f64>,
    pub violations: Vec<ConvexityViolation>,
}

/// Checks convexity of λ ↦ F(ξ + λ a⊗ν) on an increasing λ-grid: each
/// interior value must lie below the chord through its neighbours up to `tol`.
pub fn rank_one_convexity_probe(
    density: impl Fn(&Matrix) -> Result<f64>,
    xi: &Matrix,
    a: &[f64],
    nu: &[f64],
    lambdas: &[f64],
    tol: f64,
) -> Result<ConvexityReport> {
    if lambdas.len() < 2 {
        return Ok(ConvexityReport {
            lambdas: lambdas.to_vec(),
            values: Vec::new(),
            violations: Vec::new(),
        });
    }
    if lambdas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("λ-grid must be increasing".into()));
    }
    let dir = Matrix::outer(a, nu);
    let values = lambdas
        .iter()
        .map(|&l| density(&xi.add(&dir.scaled(l))))
        .collect::<Result<Vec<f64>>>()?;
    let mut violations = Vec::new();
    for i in 1..lambdas.len() - 1 {
        let (l0, l1, l2) = (lambdas[i - 1], lambdas[i], lambdas[i + 1]);
        let w = (l1 - l0) / (l2 - l0);
        let chord = (1.0 - w) * values[i - 1] + w * values[i + 1];
        let excess = values[i] - chord;
        if excess > tol {
            violations.push(ConvexityViolation { lambda: l1, excess });
        }
    }
    Ok(ConvexityReport {
        lambdas: lambdas.to_vec(),
        values,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrand::Coefficient;

    fn circle_point() -> (ManifoldHandle, ManifoldPoint) {
        let m = ManifoldHandle::circle();
        let s = m.point(&[0.6, 0.8]).unwrap();
        (m, s)
    }

    #[test]
    fn isotropic_density_keeps_zero_corrector() {
        let (m, s) = circle_point();
        let f = Integrand::isotropic(2, 2);
        // tangent at s is (-0.8, 0.6)
        let xi = Matrix::outer(&[-0.8, 0.6], &[0.5, -1.5]);
        let cfg = CellConfig {
            n: 8,
            schedule: vec![1, 2],
            ..CellConfig::default_for(2)
        };
        let est = tf_hom(&f, &m, &s, &xi, &cfg).unwrap();
        assert!((est.value - xi.norm()).abs() < 1e-9 * xi.norm(), "{est:?}");
        assert!(est.error_estimate < 1e-9);
    }

    #[test]
    fn zero_slope_gives_zero() {
        let (m, s) = circle_point();
        let f = Integrand::weighted_norm(Coefficient::parse("sine:2,1,0").unwrap(), 1, 2);
        let cfg = CellConfig {
            n: 16,
            schedule: vec![1],
            ..CellConfig::default_for(1)
        };
        let spec = tangent_spec(CellDensity::Bulk(f), &m, &s, &Matrix::zeros(2, 1), &cfg);
        let sol = solve_cell(&spec).unwrap();
        assert_eq!(sol.value, 0.0);
        assert!(sol.corrector.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rejects_normal_slope() {
        let (m, s) = circle_point();
        let f = Integrand::isotropic(1, 2);
        let cfg = CellConfig::default_for(1);
        let spec = tangent_spec(CellDensity::Bulk(f), &m, &s, &Matrix::outer(&[0.6, 0.8], &[1.0]), &cfg);
        assert!(matches!(solve_cell(&spec), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn corrector_is_tangent() {
        let m = ManifoldHandle::sphere(3).unwrap();
        let s = m.point(&[0.0, 0.6, 0.8]).unwrap();
        let f = Integrand::weighted_norm(Coefficient::parse("sinesum:2,1").unwrap(), 2, 3);
        let xi = Matrix::from_columns(&[vec![1.0, 0.0, 0.0], vec![0.0, 0.8, -0.6]]);
        let cfg = CellConfig {
            n: 4,
            schedule: vec![1],
            optim: OptimConfig {
                max_iter: 2000,
                ..OptimConfig::default()
            },
        };
        let spec = tangent_spec(CellDensity::Bulk(f), &m, &s, &xi, &cfg);
        let sol = solve_cell(&spec).unwrap();
        for v in sol.corrector.values().chunks(3) {
            assert!(linalg::dot(v, s.coords()).abs() < 1e-10);
        }
        assert!(sol.value <= 2.0 * xi.norm() + 1e-9);
    }

    #[test]
    fn one_point_lambda_grid_is_empty() {
        let rep = rank_one_convexity_probe(
            |_| Ok(0.0),
            &Matrix::zeros(2, 1),
            &[1.0, 0.0],
            &[1.0],
            &[0.5],
            1e-6,
        )
        .unwrap();
        assert!(rep.violations.is_empty() && rep.values.is_empty());
    }
}
