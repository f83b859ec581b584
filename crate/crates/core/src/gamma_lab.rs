//! Direct minimization of F_ε(u) = ∫_Ω f(x/ε, ∇u) dx over M-valued grid
//! fields, Γ-convergence diagnostics against F_hom, and the averaged
//! projection onto spheres.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bv_rep::{evaluate_fhom, BoxDomain, BvMap, HomDensities, Quadrature};
use crate::density::DensityField;
use crate::error::{Error, Result};
use crate::grid::{Grid, GridField};
use crate::integrand::{FrozenIntegrand, Integrand};
use crate::linalg;
use crate::manifold::{ManifoldHandle, ManifoldKind};
use crate::mfield::ManifoldProblem;
use crate::optim::OptimConfig;
use crate::rng::SeedStream;

/// Minimum nodes per ε-period along each axis.
pub const MIN_NODES_PER_PERIOD: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryCondition {
    /// u = a on {x₁ = lo₁} and u = b on {x₁ = hi₁}; other faces free.
    Dirichlet { a: Vec<f64>, b: Vec<f64> },
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaTolerances {
    /// Allowed relative increase between consecutive ε.
    pub monotone: f64,
    /// Relative distance of the smallest-ε minimum to F_hom.
    pub limit: f64,
    /// Relative slack of the lower bound F_ε ≥ F_hom.
    pub lower_bound: f64,
    /// Relative gap of the recovery competitor at the smallest ε.
    pub recovery: f64,
}

impl Default for GammaTolerances {
    fn default() -> Self {
        Self {
            monotone: 0.01,
            limit: 0.10,
            lower_bound: 0.01,
            recovery: 0.02,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EpsExperiment {
    pub integrand: Integrand,
    pub manifold: ManifoldHandle,
    /// A cube.
    pub domain: BoxDomain,
    /// Positive and strictly decreasing.
    pub eps: Vec<f64>,
    pub nodes_per_period: usize,
    pub boundary: BoundaryCondition,
    pub optim: OptimConfig,
    pub seed: u64,
    /// Amplitude of the seeded perturbation of the initial field.
    pub perturbation: f64,
    /// Transition width of the recovery competitor at a jump, as ε^exponent.
    pub recovery_width_exponent: f64,
    pub tolerances: GammaTolerances,
}

impl EpsExperiment {
    pub fn new(integrand: Integrand, manifold: ManifoldHandle, eps: Vec<f64>, boundary: BoundaryCondition) -> Self {
        let dim = integrand.space_dim();
        Self {
            integrand,
            manifold,
            domain: BoxDomain::unit(dim),
            eps,
            nodes_per_period: MIN_NODES_PER_PERIOD,
            boundary,
            optim: OptimConfig::default(),
            seed: 0,
            perturbation: 1e-3,
            recovery_width_exponent: 0.5,
            tolerances: GammaTolerances::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.integrand.space_dim();
        if self.integrand.target_dim() != self.manifold.ambient_dim() {
            return Err(Error::Dimension("integrand and manifold dimensions differ".into()));
        }
        if self.domain.dim() != n {
            return Err(Error::Dimension("domain dimension differs from the integrand".into()));
        }
        let side = self.side();
        if (0..n).any(|k| ((self.domain.hi[k] - self.domain.lo[k]) - side).abs() > 1e-12 * side) {
            return Err(Error::InvalidInput("the domain must be a cube".into()));
        }
        if self.eps.is_empty()
            || self.eps.iter().any(|e| !(*e > 0.0) || !e.is_finite())
            || self.eps.windows(2).any(|w| w[1] >= w[0])
        {
            return Err(Error::InvalidInput("ε values must be positive and strictly decreasing".into()));
        }
        if self.nodes_per_period < MIN_NODES_PER_PERIOD {
            return Err(Error::InvalidInput(format!(
                "need at least {MIN_NODES_PER_PERIOD} nodes per period, got {}",
                self.nodes_per_period
            )));
        }
        if let BoundaryCondition::Dirichlet { a, b } = &self.boundary {
            for p in [a, b] {
                if p.len() != self.manifold.ambient_dim() || self.manifold.distance_to(p) > 1e-10 {
                    return Err(Error::InvalidInput("Dirichlet values must lie on M".into()));
                }
            }
        }
        Ok(())
    }

    fn side(&self) -> f64 {
        self.domain.hi[0] - self.domain.lo[0]
    }

    /// Grid resolving ε with at least `nodes_per_period` cells per period.
    pub fn grid(&self, eps: f64) -> Grid {
        let side = self.side();
        let cells = ((side / eps) * self.nodes_per_period as f64 - 1e-9).ceil().max(1.0) as usize;
        let h = side / cells as f64;
        Grid::cube(self.domain.dim(), cells, h, 0.0, false)
    }

    fn position(&self, grid: &Grid, node: usize) -> Vec<f64> {
        grid.node_position(node)
            .iter()
            .zip(&self.domain.lo)
            .map(|(p, l)| p + l)
            .collect()
    }

    fn cell_position(&self, grid: &Grid, cell: usize) -> Vec<f64> {
        grid.cell_center(cell)
            .iter()
            .zip(&self.domain.lo)
            .map(|(p, l)| p + l)
            .collect()
    }

    fn fixed(&self, grid: &Grid) -> Vec<bool> {
        let last = grid.cells_per_axis();
        (0..grid.num_nodes())
            .map(|i| match self.boundary {
                BoundaryCondition::Dirichlet { .. } => {
                    let m = grid.node_multi(i);
                    m[0] == 0 || m[0] == last
                }
                BoundaryCondition::Free => false,
            })
            .collect()
    }

    fn problem<'a>(&'a self, grid: &'a Grid, eps: f64) -> ManifoldProblem<'a, FrozenIntegrand> {
        let field = self.integrand.field();
        let h = grid.spacing();
        ManifoldProblem {
            grid,
            manifold: &self.manifold,
            locals: (0..grid.num_cells())
                .map(|c| {
                    let y: Vec<f64> = self.cell_position(grid, c).iter().map(|x| x / eps).collect();
                    field.local(&y)
                })
                .collect(),
            weight: h.powi(grid.dim() as i32),
            fixed: self.fixed(grid),
        }
    }
}

/// Minimizer of the discrete F_ε for one ε.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpsSolution {
    pub eps: f64,
    pub energy: f64,
    pub initial_energy: f64,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
    pub field: GridField,
}

/// Minimizes the discrete F_ε from a seeded initial field: the geodesic
/// profile between the Dirichlet values along x₁, or a constant field.
pub fn minimize_feps(exp: &EpsExperiment, eps: f64) -> Result<EpsSolution> {
    exp.validate()?;
    let grid = exp.grid(eps);
    let x0 = initial_field(exp, &grid, eps)?;
    minimize_from(exp, eps, grid, x0)
}

fn initial_field(exp: &EpsExperiment, grid: &Grid, eps: f64) -> Result<Vec<f64>> {
    let m = &exp.manifold;
    let d = m.ambient_dim();
    let side = exp.side();
    let (a, b) = match &exp.boundary {
        BoundaryCondition::Dirichlet { a, b } => (a.clone(), b.clone()),
        BoundaryCondition::Free => {
            let mut e1 = vec![0.0; d];
            e1[0] = 1.0;
            let p = m
                .nearest_point(&e1)
                .ok_or_else(|| Error::Unsupported("no reference point on M for a free start".into()))?;
            (p.clone(), p)
        }
    };
    let pa = m.point(&a)?;
    let pb = m.point(&b)?;
    let curve = m.geodesic_profile(&pa, &pb);
    let fixed = exp.fixed(grid);
    // One stream per ε so runs do not depend on scheduling.
    let mut rng = SeedStream::new(exp.seed).rng(eps.to_bits());
    let mut x = Vec::with_capacity(grid.num_nodes() * d);
    for i in 0..grid.num_nodes() {
        let s = grid.node_position(i)[0] / side;
        let mut p = curve.sample(0.5 - s);
        if !fixed[i] && exp.perturbation > 0.0 {
            for c in p.iter_mut() {
                *c += exp.perturbation * (2.0 * rng.gen::<f64>() - 1.0);
            }
            m.project_in_place(&mut p);
        }
        x.extend(p);
    }
    Ok(x)
}

fn minimize_from(exp: &EpsExperiment, eps: f64, grid: Grid, x0: Vec<f64>) -> Result<EpsSolution> {
    let d = exp.manifold.ambient_dim();
    let scale = 1.0 + exp.manifold.diameter();
    let cfg = OptimConfig {
        mu_start: exp.optim.mu_start * scale,
        ..exp.optim.clone()
    };
    let (x, rep) = exp.problem(&grid, eps).solve(x0, &cfg, exp.optim.grad_tol * scale);
    if !rep.converged {
        log::warn!("F_ε minimization at ε = {eps} stopped without converging");
    }
    Ok(EpsSolution {
        eps,
        energy: rep.value,
        initial_energy: rep.initial_value,
        iterations: rep.iterations,
        converged: rep.converged,
        grad_norm: rep.grad_norm,
        field: GridField::from_values(grid, d, x),
    })
}

/// Unsmoothed discrete F_ε of a nodal field on `exp.grid(eps)`.
pub fn feps_energy(exp: &EpsExperiment, eps: f64, field: &GridField) -> Result<f64> {
    exp.validate()?;
    let grid = exp.grid(eps);
    if field.grid().num_nodes() != grid.num_nodes() || field.width() != exp.manifold.ambient_dim() {
        return Err(Error::Dimension("field does not match the ε-grid".into()));
    }
    Ok(exp.problem(&grid, eps).energy(field.values()))
}

/// Samples u at the nodes, replacing each jump by a geodesic transition of
/// width ε^exponent across the jump plane.
pub fn recovery_competitor(exp: &EpsExperiment, u: &BvMap, eps: f64) -> Result<GridField> {
    exp.validate()?;
    if u.dim() != exp.domain.dim() || u.manifold().ambient_dim() != exp.manifold.ambient_dim() {
        return Err(Error::Dimension("target map does not match the experiment".into()));
    }
    let grid = exp.grid(eps);
    let width = eps.powf(exp.recovery_width_exponent).min(exp.side());
    let jumps = u.decompose(&Quadrature::default()).jump;
    let m = &exp.manifold;
    let d = m.ambient_dim();
    let mut values = Vec::with_capacity(grid.num_nodes() * d);
    for i in 0..grid.num_nodes() {
        let x = exp.position(&grid, i);
        let near = jumps
            .iter()
            .map(|j| (linalg::dist(&x, &j.x), j))
            .min_by(|p, q| p.0.total_cmp(&q.0));
        let mut v = None;
        if let Some((_, j)) = near {
            let r: f64 = x.iter().zip(&j.x).zip(&j.normal).map(|((a, b), n)| (a - b) * n).sum();
            if r.abs() < 0.5 * width {
                v = Some(m.geodesic_point(&j.minus, &j.plus, r / width + 0.5));
            }
        }
        let v = match v {
            Some(v) => v,
            None => u.value(&x).ok_or_else(|| Error::InvalidInput("node outside the target domain".into()))?,
        };
        values.extend(v);
    }
    if let BoundaryCondition::Dirichlet { a, b } = &exp.boundary {
        let fixed = exp.fixed(&grid);
        for (i, f) in fixed.iter().enumerate() {
            if *f {
                let src = if grid.node_multi(i)[0] == 0 { a } else { b };
                values[i * d..(i + 1) * d].copy_from_slice(src);
            }
        }
    }
    Ok(GridField::from_values(grid, d, values))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsRecord {
    pub eps: f64,
    pub cells_per_axis: usize,
    pub min_energy: f64,
    pub converged: bool,
    pub iterations: usize,
    pub recovery_energy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GammaReport {
    pub records: Vec<EpsRecord>,
    /// F_hom of the supplied map.
    pub fhom: f64,
    /// min over ε of the minimized energies, minus F_hom.
    pub liminf_gap: f64,
    /// Minimized energy at the smallest ε, minus F_hom.
    pub limit_gap: f64,
    /// Recovery competitor energy at the smallest ε, minus F_hom.
    pub recovery_gap: f64,
    pub monotone: bool,
    pub lower_bound: bool,
    pub limit: bool,
    pub recovery: bool,
    pub all_converged: bool,
    #[serde(skip)]
    pub fields: Vec<GridField>,
}

impl GammaReport {
    pub fn min_energies(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.min_energy).collect()
    }
}

/// Minimizes F_ε along the schedule, evaluates recovery competitors built
/// from `u` and compares both traces with F_hom(u).
pub fn recovery_diagnostic(exp: &EpsExperiment, u: &BvMap, densities: &dyn HomDensities) -> Result<GammaReport> {
    exp.validate()?;
    let fhom = evaluate_fhom(u, densities, &Quadrature::default())?.total;
    let runs: Vec<(EpsSolution, f64)> = exp
        .eps
        .par_iter()
        .map(|&eps| {
            let sol = minimize_feps(exp, eps)?;
            let comp = recovery_competitor(exp, u, eps)?;
            let rec = feps_energy(exp, eps, &comp)?;
            log::debug!("ε = {eps}: min {:.6}, recovery {rec:.6}", sol.energy);
            Ok((sol, rec))
        })
        .collect::<Result<_>>()?;
    let tol = exp.tolerances;
    let scale = fhom.abs().max(1e-12);
    let energies: Vec<f64> = runs.iter().map(|r| r.0.energy).collect();
    let last = runs.last().expect("nonempty schedule");
    let min_energy = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let monotone = energies.windows(2).all(|w| w[1] <= w[0] * (1.0 + tol.monotone) + 1e-12);
    let lower_bound = energies.iter().all(|e| *e >= fhom - tol.lower_bound * scale);
    let limit_gap = last.0.energy - fhom;
    let recovery_gap = last.1 - fhom;
    let records = runs
        .iter()
        .map(|(s, rec)| EpsRecord {
            eps: s.eps,
            cells_per_axis: s.field.grid().cells_per_axis(),
            min_energy: s.energy,
            converged: s.converged,
            iterations: s.iterations,
            recovery_energy: *rec,
        })
        .collect();
    Ok(GammaReport {
        records,
        fhom,
        liminf_gap: min_energy - fhom,
        limit_gap,
        recovery_gap,
        monotone,
        lower_bound,
        limit: limit_gap.abs() <= tol.limit * scale,
        recovery: recovery_gap.abs() <= tol.recovery * scale,
        all_converged: runs.iter().all(|r| r.0.converged),
        fields: runs.into_iter().map(|r| r.0.field).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionConfig {
    pub shifts: usize,
    /// Radius σ of the shift ball around the center of co(M).
    pub radius: f64,
    pub seed: u64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            shifts: 64,
            radius: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectionResult {
    pub field: GridField,
    pub shift: Vec<f64>,
    /// ∫|∇w| / ∫|∇v|.
    pub ratio: f64,
    pub mass_in: f64,
    pub mass_out: f64,
}

/// ∫|∇v| with cell gradients from corner-averaged differences.
pub fn gradient_mass(v: &GridField) -> f64 {
    let g = v.grid();
    let n = g.dim();
    let w = v.width();
    let h = g.spacing();
    let corners = 1usize << n;
    let mut idx = vec![0; corners];
    let mut grad = vec![0.0; w * n];
    let mut total = 0.0;
    for c in 0..g.num_cells() {
        g.cell_corners(c, &mut idx);
        grad.iter_mut().for_each(|x| *x = 0.0);
        for (k, &node) in idx.iter().enumerate() {
            for j in 0..n {
                if k & (1 << j) != 0 {
                    let lo = idx[k ^ (1 << j)];
                    for r in 0..w {
                        grad[j * w + r] += (v.node(node)[r] - v.node(lo)[r]) / h;
                    }
                }
            }
        }
        let inv = 2.0 / corners as f64;
        total += inv * linalg::norm(&grad);
    }
    total * h.powi(n as i32)
}

/// Nodewise nearest-point projection onto M.
pub fn nearest_point_projection(v: &GridField, m: &ManifoldHandle) -> Result<GridField> {
    let mut out = v.clone();
    for i in 0..v.grid().num_nodes() {
        let p = m.project(v.node(i))?;
        out.node_mut(i).copy_from_slice(p.coords());
    }
    Ok(out)
}

/// Radial projection of p onto the unit sphere from a, |a| < 1.
fn radial(a: &[f64], p: &[f64]) -> Option<Vec<f64>> {
    let u: Vec<f64> = p.iter().zip(a).map(|(x, y)| x - y).collect();
    let r = linalg::norm(&u);
    if r < 1e-9 {
        return None;
    }
    let dir: Vec<f64> = u.iter().map(|x| x / r).collect();
    let ad = linalg::dot(a, &dir);
    let lam = -ad + (ad * ad + 1.0 - linalg::dot(a, a)).sqrt();
    Some(a.iter().zip(&dir).map(|(x, e)| x + lam * e).collect())
}

/// Retracts a field with values in the unit ball onto the sphere through
/// shifted radial projections, keeping the shift with the least gradient
/// mass. Nodes already on M are copied unchanged.
///
/// The radial projection from an interior point fixes the sphere, so
/// composing with its inverse on M is the identity.
pub fn averaged_projection(v: &GridField, m: &ManifoldHandle, cfg: &ProjectionConfig) -> Result<ProjectionResult> {
    if !matches!(m.kind(), ManifoldKind::Circle | ManifoldKind::Sphere) {
        return Err(Error::Unsupported("averaged projection is implemented for round spheres".into()));
    }
    let d = m.ambient_dim();
    if v.width() != d {
        return Err(Error::Dimension("field width differs from the ambient dimension".into()));
    }
    if !(cfg.radius > 0.0 && cfg.radius < 1.0) || cfg.shifts == 0 {
        return Err(Error::InvalidInput("shift radius must lie in (0, 1) with at least one shift".into()));
    }
    let nodes = v.grid().num_nodes();
    let on_m: Vec<bool> = (0..nodes).map(|i| m.distance_to(v.node(i)) <= 1e-10).collect();
    if (0..nodes).any(|i| linalg::norm(v.node(i)) > 1.0 + 1e-10) {
        return Err(Error::InvalidInput("field leaves the convex hull of M".into()));
    }
    let mass_in = gradient_mass(v);
    if on_m.iter().all(|b| *b) {
        return Ok(ProjectionResult {
            field: v.clone(),
            shift: vec![0.0; d],
            ratio: 1.0,
            mass_in,
            mass_out: mass_in,
        });
    }
    if mass_in == 0.0 {
        log::warn!("field is constant off M; nearest-point projection has no gradient budget to certify");
        return Err(Error::DegenerateField(
            "∫|∇v| = 0 with values off M; use nearest_point_projection".into(),
        ));
    }
    let mut rng = SeedStream::new(cfg.seed).rng(0);
    let shifts: Vec<Vec<f64>> = (0..cfg.shifts)
        .map(|_| loop {
            let a: Vec<f64> = (0..d).map(|_| cfg.radius * (2.0 * rng.gen::<f64>() - 1.0)).collect();
            if linalg::norm(&a) <= cfg.radius {
                break a;
            }
        })
        .collect();
    let candidates: Vec<Option<(f64, GridField, Vec<f64>)>> = shifts
        .into_par_iter()
        .map(|a| {
            let mut w = v.clone();
            for i in 0..nodes {
                if !on_m[i] {
                    let p = radial(&a, v.node(i))?;
                    w.node_mut(i).copy_from_slice(&p);
                }
            }
            Some((gradient_mass(&w), w, a))
        })
        .collect();
    let (mass_out, field, shift) = candidates
        .into_iter()
        .flatten()
        .min_by(|p, q| p.0.total_cmp(&q.0))
        .ok_or_else(|| Error::DegenerateField("every shift hits a node of the field".into()))?;
    Ok(ProjectionResult {
        field,
        shift,
        ratio: mass_out / mass_in,
        mass_in,
        mass_out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bv_rep::{build_bv, BvRecipe, ClosedFormDensities, PieceRecipe, ScalarExpr};
    use std::f64::consts::PI;

    fn angle(t: f64) -> Vec<f64> {
        vec![t.cos(), t.sin()]
    }

    fn isotropic_exp(eps: Vec<f64>, a: f64, b: f64) -> EpsExperiment {
        EpsExperiment::new(
            Integrand::isotropic(1, 2),
            ManifoldHandle::circle(),
            eps,
            BoundaryCondition::Dirichlet {
                a: angle(a),
                b: angle(b),
            },
        )
    }

    #[test]
    fn isotropic_minimum_is_the_geodesic_distance() {
        let exp = isotropic_exp(vec![0.25, 0.125], 0.0, 2.0);
        for eps in [0.25, 0.125] {
            let sol = minimize_feps(&exp, eps).unwrap();
            assert!((sol.energy - 2.0).abs() < 2e-3, "{}", sol.energy);
            for i in 0..sol.field.grid().num_nodes() {
                assert!(exp.manifold.distance_to(sol.field.node(i)) < 1e-10);
            }
        }
    }

    #[test]
    fn equal_endpoints_give_zero() {
        let exp = isotropic_exp(vec![0.25], 1.0, 1.0);
        let sol = minimize_feps(&exp, 0.25).unwrap();
        assert!(sol.energy < 1e-6);
    }

    #[test]
    fn schedule_and_resolution_are_checked() {
        let mut exp = isotropic_exp(vec![0.25, 0.5], 0.0, 1.0);
        assert!(matches!(minimize_feps(&exp, 0.25), Err(Error::InvalidInput(_))));
        exp.eps = vec![0.25];
        exp.nodes_per_period = 8;
        assert!(matches!(minimize_feps(&exp, 0.25), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn recovery_of_smooth_and_jump_maps() {
        let exp = EpsExperiment {
            boundary: BoundaryCondition::Free,
            ..isotropic_exp(vec![1.0 / 16.0], 0.0, 0.0)
        };
        let m = ManifoldHandle::circle();
        let stubs = ClosedFormDensities {
            manifold: m.clone(),
            bulk_scale: 1.0,
            surface_scale: 1.0,
        };
        let smooth = build_bv(
            &BvRecipe {
                domain: BoxDomain::unit(1),
                pieces: vec![PieceRecipe::GreatCircle {
                    region: BoxDomain::unit(1),
                    base: angle(0.0),
                    dir: angle(PI / 2.0),
                    angle: ScalarExpr::Affine {
                        offset: 0.0,
                        slope: vec![2.0 * PI],
                    },
                }],
            },
            &m,
        )
        .unwrap();
        let c = recovery_competitor(&exp, &smooth, 1.0 / 16.0).unwrap();
        let e = feps_energy(&exp, 1.0 / 16.0, &c).unwrap();
        assert!((e - 2.0 * PI).abs() < 1e-9 * 2.0 * PI);

        let jump = build_bv(
            &BvRecipe {
                domain: BoxDomain::unit(1),
                pieces: vec![PieceRecipe::TwoPhase {
                    region: BoxDomain::unit(1),
                    a: angle(1.5),
                    b: angle(0.0),
                    normal: vec![1.0],
                    offset: 0.5,
                }],
            },
            &m,
        )
        .unwrap();
        let c = recovery_competitor(&exp, &jump, 1.0 / 16.0).unwrap();
        let e = feps_energy(&exp, 1.0 / 16.0, &c).unwrap();
        assert!((e - 1.5).abs() < 1e-9, "{e}");
        let _ = stubs;
    }

    #[test]
    fn projection_keeps_manifold_fields() {
        let g = Grid::cube(1, 32, 1.0 / 32.0, 0.0, false);
        let v = GridField::from_fn(g, 2, |x| angle(3.0 * x[0]));
        let r = averaged_projection(&v, &ManifoldHandle::circle(), &ProjectionConfig::default()).unwrap();
        assert_eq!(r.field, v);
        assert_eq!(r.ratio, 1.0);
    }

    #[test]
    fn projection_of_a_dipping_field() {
        let m = ManifoldHandle::circle();
        let g = Grid::cube(2, 24, 1.0 / 24.0, 0.0, false);
        let v = GridField::from_fn(g, 2, |x| {
            let r = 1.0 - 0.5 * (PI * x[0]).sin() * (PI * x[1]).sin();
            angle(2.0 * x[0] + x[1]).iter().map(|c| r * c).collect()
        });
        let r = averaged_projection(&v, &m, &ProjectionConfig::default()).unwrap();
        assert!(r.ratio.is_finite() && r.ratio > 0.0);
        for i in 0..r.field.grid().num_nodes() {
            assert!(m.distance_to(r.field.node(i)) < 1e-10);
            if m.distance_to(v.node(i)) <= 1e-10 {
                assert_eq!(r.field.node(i), v.node(i));
            }
        }
    }

    #[test]
    fn constant_interior_field_is_degenerate() {
        let g = Grid::cube(1, 8, 0.125, 0.0, false);
        let v = GridField::from_fn(g, 2, |_| vec![0.3, 0.1]);
        assert!(matches!(
            averaged_projection(&v, &ManifoldHandle::circle(), &ProjectionConfig::default()),
            Err(Error::DegenerateField(_))
        ));
        let w = nearest_point_projection(&v, &ManifoldHandle::circle()).unwrap();
        assert!((linalg::norm(w.node(0)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_transition_settles_near_the_minimum_weight() {
        use crate::integrand::Coefficient;
        let exp = EpsExperiment {
            integrand: Integrand::weighted_norm(Coefficient::parse("sine:2,1,0").unwrap(), 1, 2),
            ..isotropic_exp(vec![0.25, 0.125, 0.0625, 0.03125, 0.015625], 0.0, 2.0)
        };
        let e: Vec<f64> = exp.eps.iter().map(|&eps| minimize_feps(&exp, eps).unwrap().energy).collect();
        eprintln!("{e:?}");
        for w in e.windows(2) {
            assert!(w[1] <= w[0] * 1.01);
        }
        assert!((e[4] - 2.0).abs() < 0.2);
        assert!(e.iter().all(|v| *v >= 2.0 - 1e-9));
    }
}
