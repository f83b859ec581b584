//! Surface density ϑ_hom(a, b, ν) from jump-boundary cells (class A_t) and
//! geodesic-boundary cells (class B_ε), with symmetry, basis and regularity
//! probes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell_solver::DensityEstimate;
use crate::density::DensityField;
use crate::error::{Error, Result};
use crate::grid::{Grid, GridField};
use crate::integrand::Integrand;
use crate::linalg::{self, Matrix};
use crate::manifold::{GeodesicCurve, ManifoldHandle, ManifoldPoint};
use crate::mfield::ManifoldProblem;
use crate::optim::OptimConfig;

/// Admissible class of the interface cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InterfaceClass {
    /// tQ_ν with the pure jump on the boundary; energy scaled by 1/t^{N−1}.
    Jump { t: usize },
    /// Q_ν with boundary trace γ(x·ν/ε); solved on (1/ε)Q_ν in fast
    /// variables, which leaves the energy unchanged.
    Geodesic { eps: f64 },
}

#[derive(Debug, Clone)]
pub struct JumpCellSpec {
    /// Its recession f^∞ is minimized.
    pub integrand: Integrand,
    pub manifold: ManifoldHandle,
    pub a: ManifoldPoint,
    pub b: ManifoldPoint,
    /// Orthonormal basis (ν₁, …, ν_N) of R^N.
    pub basis: Vec<Vec<f64>>,
    pub class: InterfaceClass,
    /// Grid cells per unit length.
    pub n: usize,
    pub optim: OptimConfig,
}

/// Boundary datum of a solved cell.
#[derive(Debug, Clone)]
pub enum BoundaryProfile {
    Jump,
    Geodesic(GeodesicCurve),
}

#[derive(Debug, Clone)]
pub struct InterfaceSolution {
    pub value: f64,
    pub value_mu: f64,
    pub value_half_mu: f64,
    /// Energy of the initializer.
    pub initial_value: f64,
    /// M-valued nodal field in ambient coordinates.
    pub field: GridField,
    pub profile: BoundaryProfile,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
}

/// Completes ν₁ to an orthonormal basis by Gram–Schmidt over the standard
/// basis, starting with the first vector not parallel to ν₁.
pub fn complete_basis(nu: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = nu.len();
    let nu = linalg::normalized(nu)
        .ok_or_else(|| Error::InvalidInput("normal must be nonzero".into()))?;
    if (linalg::norm(&nu) - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput("normal is not finite".into()));
    }
    let mut basis = vec![nu];
    for k in 0..n {
        if basis.len() == n {
            break;
        }
        let mut v = vec![0.0; n];
        v[k] = 1.0;
        for e in &basis {
            let c = linalg::dot(&v, e);
            linalg::axpy(-c, e, &mut v);
        }
        if linalg::norm(&v) > 1e-8 {
            basis.push(linalg::normalized(&v).unwrap());
        }
    }
    Ok(basis)
}

fn validate(spec: &JumpCellSpec) -> Result<()> {
    let n = spec.integrand.space_dim();
    let d = spec.integrand.target_dim();
    if spec.manifold.ambient_dim() != d || spec.a.dim() != d || spec.b.dim() != d {
        return Err(Error::Dimension("integrand, manifold and phases disagree on d".into()));
    }
    if spec.basis.len() != n || spec.basis.iter().any(|v| v.len() != n) {
        return Err(Error::Dimension(format!("basis must hold {n} vectors of length {n}")));
    }
    for i in 0..n {
        for j in 0..n {
            let want = if i == j { 1.0 } else { 0.0 };
            if (linalg::dot(&spec.basis[i], &spec.basis[j]) - want).abs() > 1e-12 {
                return Err(Error::InvalidInput("basis is not orthonormal".into()));
            }
        }
    }
    for p in [&spec.a, &spec.b] {
        if spec.manifold.distance_to(p.coords()) > 1e-10 {
            return Err(Error::InvalidInput("phase is not on the manifold".into()));
        }
    }
    if spec.n < 4 {
        return Err(Error::InvalidInput("grid needs n ≥ 4".into()));
    }
    Ok(())
}

/// Side length in fast variables (t, or 1/ε) and the cell count per axis.
fn extent(spec: &JumpCellSpec) -> Result<(f64, usize)> {
    match spec.class {
        InterfaceClass::Jump { t } if t >= 1 => Ok((t as f64, t * spec.n)),
        InterfaceClass::Geodesic { eps } if eps > 0.0 && eps <= 1.0 => {
            let cells = spec.n as f64 / eps;
            if (cells - cells.round()).abs() > 1e-9 * cells {
                return Err(Error::InvalidInput(format!("n/ε = {cells} is not an integer")));
            }
            Ok((1.0 / eps, cells.round() as usize))
        }
        _ => Err(Error::InvalidInput("need t ≥ 1 or 0 < ε ≤ 1".into())),
    }
}

fn cell_grid(spec: &JumpCellSpec, side: f64, cells: usize) -> Grid {
    Grid::cube(
        spec.basis.len(),
        cells,
        1.0 / spec.n as f64,
        -0.5 * side,
        false,
    )
    .with_frame(Matrix::from_columns(&spec.basis))
}

/// u_{a,b,ν} at normal index i₀ out of `cells`: a above the midplane, b
/// below it and a geodesic midpoint on it, chosen independently of the
/// order of (a, b).
fn jump_value(spec: &JumpCellSpec, i0: usize, cells: usize) -> Vec<f64> {
    let (a, b) = (spec.a.coords(), spec.b.coords());
    match (2 * i0).cmp(&cells) {
        std::cmp::Ordering::Greater => a.to_vec(),
        std::cmp::Ordering::Less => b.to_vec(),
        std::cmp::Ordering::Equal => {
            let (p, q) = if a.partial_cmp(b) == Some(std::cmp::Ordering::Greater) { (b, a) } else { (a, b) };
            spec.manifold.geodesic_point(p, q, 0.5)
        }
    }
}

/// Boundary datum and initializer of the cell.
fn initial_field(
    spec: &JumpCellSpec,
    grid: &Grid,
    cells: usize,
    curve: Option<&GeodesicCurve>,
) -> Vec<f64> {
    let d = spec.manifold.ambient_dim();
    let h = grid.spacing();
    let mut x = vec![0.0; grid.num_nodes() * d];
    for idx in 0..grid.num_nodes() {
        let i0 = grid.node_multi(idx)[0];
        let v = match curve {
            Some(c) => c.sample(grid.origin() + i0 as f64 * h),
            None => jump_value(spec, i0, cells),
        };
        x[idx * d..(idx + 1) * d].copy_from_slice(&v);
    }
    x
}

fn solve(spec: &JumpCellSpec, init: Option<&GridField>) -> Result<InterfaceSolution> {
    validate(spec)?;
    let (side, cells) = extent(spec)?;
    let grid = cell_grid(spec, side, cells);
    let d = spec.manifold.ambient_dim();
    let dim = grid.dim();
    let curve = match spec.class {
        InterfaceClass::Geodesic { .. } => Some(spec.manifold.geodesic_profile(&spec.a, &spec.b)),
        InterfaceClass::Jump { .. } => None,
    };
    let datum = initial_field(spec, &grid, cells, curve.as_ref());
    let x0 = match init {
        None => datum,
        Some(f) => {
            if f.grid().num_nodes() != grid.num_nodes() || f.width() != d {
                return Err(Error::Dimension("initial field does not match the cell".into()));
            }
            let mut x = f.values().to_vec();
            for idx in 0..grid.num_nodes() {
                let r = idx * d..(idx + 1) * d;
                if grid.is_boundary(idx) {
                    x[r.clone()].copy_from_slice(&datum[r]);
                } else {
                    spec.manifold.project_in_place(&mut x[r]);
                }
            }
            x
        }
    };
    let field = spec.integrand.recession_field();
    let h = grid.spacing();
    let problem = ManifoldProblem {
        grid: &grid,
        manifold: &spec.manifold,
        locals: (0..grid.num_cells())
            .map(|c| field.local(&grid.cell_center(c)))
            .collect(),
        weight: h.powi(dim as i32) / side.powi(dim as i32 - 1),
        fixed: (0..grid.num_nodes()).map(|i| grid.is_boundary(i)).collect(),
    };
    let dist = spec.manifold.geodesic_distance(&spec.a, &spec.b);
    let scale = 1.0 + dist;
    // Warm starts and geodesic profiles are already near the target scale.
    let mu_start = if init.is_some() || curve.is_some() {
        4.0 * spec.optim.mu
    } else {
        spec.optim.mu_start * scale
    };
    let cfg = OptimConfig {
        mu_start,
        ..spec.optim.clone()
    };
    let (x, rep) = problem.solve(x0, &cfg, spec.optim.grad_tol * scale);
    Ok(InterfaceSolution {
        value: rep.value,
        value_mu: rep.value_mu,
        value_half_mu: rep.value_half_mu,
        initial_value: rep.initial_value,
        field: GridField::from_values(grid, d, x),
        profile: match curve {
            Some(c) => BoundaryProfile::Geodesic(c),
            None => BoundaryProfile::Jump,
        },
        iterations: rep.iterations,
        converged: rep.converged,
        grad_norm: rep.grad_norm,
    })
}

/// Minimizes (1/t^{N−1})∫_{tQ_ν} f^∞(y, ∇φ) over M-valued fields equal to
/// u_{a,b,ν} on the boundary. `spec.class` must be [`InterfaceClass::Jump`].
pub fn solve_jump_cell(spec: &JumpCellSpec) -> Result<InterfaceSolution> {
    solve_jump_cell_from(spec, None)
}

/// As [`solve_jump_cell`], starting from `init` (boundary nodes are reset).
pub fn solve_jump_cell_from(spec: &JumpCellSpec, init: Option<&GridField>) -> Result<InterfaceSolution> {
    if !matches!(spec.class, InterfaceClass::Jump { .. }) {
        return Err(Error::InvalidInput("solve_jump_cell needs the jump class".into()));
    }
    solve(spec, init)
}

/// Minimizes ∫_{Q_ν} f^∞(x/ε, ∇u) with u = γ(x·ν/ε) on ∂Q_ν, starting from
/// that profile. `spec.class` must be [`InterfaceClass::Geodesic`].
pub fn solve_geodesic_cell(spec: &JumpCellSpec) -> Result<InterfaceSolution> {
    if !matches!(spec.class, InterfaceClass::Geodesic { .. }) {
        return Err(Error::InvalidInput("solve_geodesic_cell needs the geodesic class".into()));
    }
    solve(spec, None)
}

/// Warm start for a cell `factor` times larger: periodic repetition along
/// the interface aligned with the lateral faces, constant extension along ν₁.
fn extend_field(field: &GridField, factor: usize) -> Option<GridField> {
    let g = field.grid();
    let cells = g.cells_per_axis();
    if factor < 2 || ((factor - 1) * cells) % 2 != 0 {
        return None;
    }
    let offset = ((factor - 1) * cells / 2) as i64;
    let mut big = Grid::cube(g.dim(), cells * factor, g.spacing(), g.origin() * factor as f64, false);
    if let Some(v) = g.frame() {
        big = big.with_frame(v.clone());
    }
    let mut out = GridField::zeros(big.clone(), field.width());
    for idx in 0..big.num_nodes() {
        let multi: Vec<usize> = big
            .node_multi(idx)
            .into_iter()
            .enumerate()
            .map(|(j, i)| {
                if j == 0 {
                    (i as i64 - offset).clamp(0, cells as i64) as usize
                } else if i == cells * factor {
                    cells
                } else {
                    i % cells
                }
            })
            .collect();
        out.node_mut(idx).copy_from_slice(field.node(g.node_index(&multi)));
    }
    Some(out)
}

/// Resolution, schedule and optimizer settings of the interface solves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfaceConfig {
    pub n: usize,
    /// Increasing t-schedule of the jump cells.
    pub schedule: Vec<usize>,
    pub optim: OptimConfig,
    /// Also solve the geodesic class at ε = 1/t_max.
    pub cross_check: bool,
    /// Relative disagreement of the two classes that raises the flag.
    pub cross_tol: f64,
}

impl InterfaceConfig {
    /// n = 64 for N = 1, 16 otherwise; t ∈ {1, 2, 4}.
    pub fn default_for(space_dim: usize) -> Self {
        Self {
            n: if space_dim == 1 { 64 } else { 16 },
            schedule: vec![1, 2, 4],
            optim: OptimConfig::default(),
            cross_check: false,
            cross_tol: 0.03,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub eps: f64,
    pub geodesic_value: f64,
    /// |jump − geodesic| / max(jump, geodesic).
    pub relative_gap: f64,
    pub disagree: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimate {
    pub estimate: DensityEstimate,
    pub cross_check: Option<CrossCheck>,
    /// Minimizer of the largest cell.
    #[serde(skip)]
    pub field: Option<GridField>,
}

/// ϑ_hom(a, b, ν₁) along the t-schedule with the completed basis.
pub fn theta_hom(
    f: &Integrand,
    m: &ManifoldHandle,
    a: &ManifoldPoint,
    b: &ManifoldPoint,
    nu: &[f64],
    cfg: &InterfaceConfig,
) -> Result<ThetaEstimate> {
    let basis = complete_basis(nu)?;
    theta_hom_with_basis(f, m, a, b, basis, cfg)
}

/// As [`theta_hom`] with an explicit basis (ν₁ first).
pub fn theta_hom_with_basis(
    f: &Integrand,
    m: &ManifoldHandle,
    a: &ManifoldPoint,
    b: &ManifoldPoint,
    basis: Vec<Vec<f64>>,
    cfg: &InterfaceConfig,
) -> Result<ThetaEstimate> {
    let schedule = &cfg.schedule;
    if schedule.is_empty() || schedule[0] == 0 || schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidSchedule("t-schedule must be positive and increasing".into()));
    }
    let mut spec = JumpCellSpec {
        integrand: f.clone(),
        manifold: m.clone(),
        a: a.clone(),
        b: b.clone(),
        basis,
        class: InterfaceClass::Jump { t: schedule[0] },
        n: cfg.n,
        optim: cfg.optim.clone(),
    };
    validate(&spec)?;
    let mut trace = Vec::with_capacity(schedule.len());
    let mut converged = true;
    let mut gap: f64 = 0.0;
    let mut prev: Option<(usize, GridField)> = None;
    for &t in schedule {
        spec.class = InterfaceClass::Jump { t };
        let init = match &prev {
            Some((tp, field)) if t % tp == 0 => extend_field(field, t / tp),
            _ => None,
        };
        let sol = solve_jump_cell_from(&spec, init.as_ref())?;
        log::debug!("theta t={t} value={:.6} iterations={}", sol.value, sol.iterations);
        converged &= sol.converged;
        gap = gap.max((sol.value_mu - sol.value_half_mu).abs());
        trace.push((t as f64, sol.value));
        prev = Some((t, sol.field));
    }
    let value = trace.last().unwrap().1;
    let error_estimate = if trace.len() >= 2 {
        (value - trace[trace.len() - 2].1).abs()
    } else {
        0.0
    };
    let cross_check = if cfg.cross_check {
        let t = *schedule.last().unwrap();
        let eps = 1.0 / t as f64;
        spec.class = InterfaceClass::Geodesic { eps };
        let sol = solve_geodesic_cell(&spec)?;
        let denom = value.max(sol.value);
        let relative_gap = if denom > 1e-12 {
            (value - sol.value).abs() / denom
        } else {
            0.0
        };
        Some(CrossCheck {
            eps,
            geodesic_value: sol.value,
            relative_gap,
            disagree: relative_gap > cfg.cross_tol,
        })
    } else {
        None
    };
    Ok(ThetaEstimate {
        estimate: DensityEstimate {
            value,
            trace,
            upper_bound: true,
            error_estimate,
            converged,
            smoothing_gap: gap,
        },
        cross_check,
        field: prev.map(|p| p.1),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisReport {
    pub values: Vec<f64>,
    pub max_deviation: f64,
}

/// ϑ_hom for each completion of ν₁ (first vector of every basis) and the
/// largest pairwise deviation.
pub fn basis_independence_probe(
    f: &Integrand,
    m: &ManifoldHandle,
    a: &ManifoldPoint,
    b: &ManifoldPoint,
    bases: &[Vec<Vec<f64>>],
    cfg: &InterfaceConfig,
) -> Result<BasisReport> {
    if bases.is_empty() {
        return Err(Error::InvalidInput("no basis given".into()));
    }
    let nu = &bases[0][0];
    if bases.iter().any(|b| linalg::dist(&b[0], nu) > 1e-12) {
        return Err(Error::InvalidInput("all bases must share ν₁".into()));
    }
    let cfg = InterfaceConfig {
        cross_check: false,
        ..cfg.clone()
    };
    let values = bases
        .par_iter()
        .map(|basis| theta_hom_with_basis(f, m, a, b, basis.clone(), &cfg).map(|e| e.estimate.value))
        .collect::<Result<Vec<f64>>>()?;
    let mut max_deviation: f64 = 0.0;
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            max_deviation = max_deviation.max((values[i] - values[j]).abs());
        }
    }
    Ok(BasisReport { values, max_deviation })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityConfig {
    pub interface: InterfaceConfig,
    /// Recompute at resolution 2n.
    pub refine: bool,
    pub max_lipschitz: f64,
    pub max_ratio: f64,
    /// Allowed relative change of the Lipschitz maximum under refinement.
    pub refinement_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub thetas: Vec<f64>,
    /// max |ϑ_i − ϑ_j| / (|a_i − a_j| + |b_i − b_j|).
    pub max_lipschitz: f64,
    /// max ϑ_i / |a_i − b_i| over pairs with a_i ≠ b_i.
    pub max_ratio: f64,
    pub refined_thetas: Option<Vec<f64>>,
    pub refined_max_lipschitz: Option<f64>,
    pub refinement_change: Option<f64>,
    pub within_thresholds: bool,
}

fn quotients(pairs: &[(ManifoldPoint, ManifoldPoint)], thetas: &[f64]) -> (f64, f64) {
    let mut lip: f64 = 0.0;
    let mut ratio: f64 = 0.0;
    for i in 0..pairs.len() {
        let chord = linalg::dist(pairs[i].0.coords(), pairs[i].1.coords());
        if chord > 1e-12 {
            ratio = ratio.max(thetas[i] / chord);
        }
        for j in i + 1..pairs.len() {
            let den = linalg::dist(pairs[i].0.coords(), pairs[j].0.coords())
                + linalg::dist(pairs[i].1.coords(), pairs[j].1.coords());
            if den > 1e-12 {
                lip = lip.max((thetas[i] - thetas[j]).abs() / den);
            }
        }
    }
    (lip, ratio)
}

/// Empirical Lipschitz quotients of ϑ_hom(·, ·, ν₁) and the ratio
/// ϑ/|a − b| over at least ten sample pairs.
pub fn regularity_probe(
    f: &Integrand,
    m: &ManifoldHandle,
    pairs: &[(ManifoldPoint, ManifoldPoint)],
    nu: &[f64],
    cfg: &RegularityConfig,
) -> Result<RegularityReport> {
    if pairs.len() < 10 {
        return Err(Error::InvalidInput(format!("need at least 10 pairs, got {}", pairs.len())));
    }
    let run = |icfg: &InterfaceConfig| -> Result<Vec<f64>> {
        let icfg = InterfaceConfig {
            cross_check: false,
            ..icfg.clone()
        };
        pairs
            .par_iter()
            .map(|(a, b)| {
                if linalg::dist(a.coords(), b.coords()) == 0.0 {
                    return Ok(0.0);
                }
                theta_hom(f, m, a, b, nu, &icfg).map(|e| e.estimate.value)
            })
            .collect()
    };
    let thetas = run(&cfg.interface)?;
    let (max_lipschitz, max_ratio) = quotients(pairs, &thetas);
    let mut ok = max_lipschitz.is_finite()
        && max_ratio.is_finite()
        && max_lipschitz <= cfg.max_lipschitz
        && max_ratio <= cfg.max_ratio;
    let (refined_thetas, refined_max_lipschitz, refinement_change) = if cfg.refine {
        let fine = InterfaceConfig {
            n: 2 * cfg.interface.n,
            ..cfg.interface.clone()
        };
        let th = run(&fine)?;
        let (lip, _) = quotients(pairs, &th);
        let change = if max_lipschitz > 1e-12 {
            (lip - max_lipschitz).abs() / max_lipschitz
        } else {
            lip
        };
        ok &= lip.is_finite() && change <= cfg.refinement_tol;
        (Some(th), Some(lip), Some(change))
    } else {
        (None, None, None)
    };
    Ok(RegularityReport {
        thetas,
        max_lipschitz,
        max_ratio,
        refined_thetas,
        refined_max_lipschitz,
        refinement_change,
        within_thresholds: ok,
    })
}
