//! Synthetic manifold-valued BV maps with closed-form derivative
//! decomposition, tangency checks and evaluation of F_hom.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell_solver::{tf_hom, tf_hom_recession, CellConfig};
use crate::error::{Error, Result};
use crate::integrand::Integrand;
use crate::interface_solver::{theta_hom, InterfaceConfig};
use crate::linalg::{self, Matrix};
use crate::manifold::{ManifoldHandle, ManifoldKind, ManifoldPoint};

const GEOM_TOL: f64 = 1e-12;

/// Axis-aligned box [lo, hi] ⊂ R^N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() || lo.len() > 2 {
            return Err(Error::InvalidRecipe("box needs matching bounds in dimension 1 or 2".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::InvalidRecipe("box bounds must satisfy lo < hi".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn unit(dim: usize) -> Self {
        Self {
            lo: vec![0.0; dim],
            hi: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    fn contains_box(&self, other: &BoxDomain) -> bool {
        (0..self.dim()).all(|k| other.lo[k] >= self.lo[k] - GEOM_TOL && other.hi[k] <= self.hi[k] + GEOM_TOL)
    }

    fn overlap(&self, other: &BoxDomain) -> f64 {
        (0..self.dim())
            .map(|k| (self.hi[k].min(other.hi[k]) - self.lo[k].max(other.lo[k])).max(0.0))
            .product()
    }

    /// Midpoints of a uniform `per_axis`^N subdivision, with the cell volume.
    fn midpoints(&self, per_axis: usize) -> (Vec<Vec<f64>>, f64) {
        let n = self.dim();
        let total = per_axis.pow(n as u32);
        let h: Vec<f64> = (0..n).map(|k| (self.hi[k] - self.lo[k]) / per_axis as f64).collect();
        let pts = (0..total)
            .map(|mut idx| {
                (0..n)
                    .map(|k| {
                        let i = idx % per_axis;
                        idx /= per_axis;
                        self.lo[k] + (i as f64 + 0.5) * h[k]
                    })
                    .collect()
            })
            .collect();
        (pts, h.iter().product())
    }
}

/// Closed-form scalar field on R^N with its gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarExpr {
    /// offset + slope·x
    Affine { offset: f64, slope: Vec<f64> },
    /// offset + amplitude·sin(2π wave·x)
    Sine {
        offset: f64,
        amplitude: f64,
        wave: Vec<f64>,
    },
}

impl ScalarExpr {
    fn dim(&self) -> usize {
        match self {
            ScalarExpr::Affine { slope, .. } => slope.len(),
            ScalarExpr::Sine { wave, .. } => wave.len(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        match self {
            ScalarExpr::Affine { offset, slope } => (offset + linalg::dot(slope, x), slope.clone()),
            ScalarExpr::Sine {
                offset,
                amplitude,
                wave,
            } => {
                let arg = 2.0 * std::f64::consts::PI * linalg::dot(wave, x);
                let c = amplitude * 2.0 * std::f64::consts::PI * arg.cos();
                (offset + amplitude * arg.sin(), wave.iter().map(|w| c * w).collect())
            }
        }
    }
}

/// One piece of a recipe, living on its own sub-box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PieceRecipe {
    Constant {
        region: BoxDomain,
        value: Vec<f64>,
    },
    /// u = cos θ(x)·base + sin θ(x)·dir on a great circle of a sphere.
    GreatCircle {
        region: BoxDomain,
        base: Vec<f64>,
        dir: Vec<f64>,
        angle: ScalarExpr,
    },
    /// a on {x·normal > offset}, b elsewhere.
    TwoPhase {
        region: BoxDomain,
        a: Vec<f64>,
        b: Vec<f64>,
        normal: Vec<f64>,
        offset: f64,
    },
    /// Great-circle map with angle start + total·c_k(s), c_k the depth-k
    /// middle-thirds staircase and s the normalized coordinate along `axis`.
    Cantor {
        region: BoxDomain,
        base: Vec<f64>,
        dir: Vec<f64>,
        start: f64,
        total: f64,
        axis: usize,
        depth: u32,
    },
    /// Constant value with a declared gradient that need not be tangent.
    /// Negative control for the tangency check.
    Declared {
        region: BoxDomain,
        value: Vec<f64>,
        gradient: Matrix,
    },
}

impl PieceRecipe {
    fn region(&self) -> &BoxDomain {
        match self {
            PieceRecipe::Constant { region, .. }
            | PieceRecipe::GreatCircle { region, .. }
            | PieceRecipe::TwoPhase { region, .. }
            | PieceRecipe::Cantor { region, .. }
            | PieceRecipe::Declared { region, .. } => region,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BvRecipe {
    pub domain: BoxDomain,
    pub pieces: Vec<PieceRecipe>,
}

/// Default depth of Cantor fixtures.
pub const DEFAULT_CANTOR_DEPTH: u32 = 12;

/// Value of the depth-k staircase at s ∈ [0, 1]: piecewise linear, rising
/// by 2^{−k} on each of the 2^k surviving intervals of length 3^{−k}.
pub fn staircase(s: f64, depth: u32) -> f64 {
    let s = s.clamp(0.0, 1.0);
    if depth == 0 {
        return s;
    }
    if s < 1.0 / 3.0 {
        0.5 * staircase(3.0 * s, depth - 1)
    } else if s > 2.0 / 3.0 {
        0.5 + 0.5 * staircase(3.0 * s - 2.0, depth - 1)
    } else {
        0.5
    }
}

/// Surviving intervals [left, left + 3^{−k}) of the depth-k construction,
/// in increasing order.
fn cantor_intervals(depth: u32) -> Vec<f64> {
    let mut lefts = vec![0.0];
    let mut len = 1.0;
    for _ in 0..depth {
        len /= 3.0;
        lefts = lefts.iter().flat_map(|&l| [l, l + 2.0 * len]).collect();
    }
    lefts
}

#[derive(Debug, Clone)]
pub struct BvMap {
    domain: BoxDomain,
    manifold: ManifoldHandle,
    pieces: Vec<PieceRecipe>,
}

fn on_manifold(m: &ManifoldHandle, p: &[f64], what: &str) -> Result<()> {
    if p.len() != m.ambient_dim() {
        return Err(Error::InvalidRecipe(format!("{what} has dimension {}, expected {}", p.len(), m.ambient_dim())));
    }
    let d = m.distance_to(p);
    if d > GEOM_TOL {
        return Err(Error::InvalidRecipe(format!("{what} is at distance {d:e} from the manifold")));
    }
    Ok(())
}

fn check_circle(m: &ManifoldHandle, base: &[f64], dir: &[f64]) -> Result<()> {
    if !matches!(m.kind(), ManifoldKind::Circle | ManifoldKind::Sphere) {
        return Err(Error::InvalidRecipe("great-circle pieces need a round sphere".into()));
    }
    on_manifold(m, base, "base")?;
    if dir.len() != base.len()
        || (linalg::norm(dir) - 1.0).abs() > GEOM_TOL
        || linalg::dot(base, dir).abs() > GEOM_TOL
    {
        return Err(Error::InvalidRecipe("dir must be a unit vector orthogonal to base".into()));
    }
    Ok(())
}

fn circle_point(base: &[f64], dir: &[f64], theta: f64) -> (Vec<f64>, Vec<f64>) {
    let (s, c) = theta.sin_cos();
    let p = base.iter().zip(dir).map(|(b, e)| c * b + s * e).collect();
    let t = base.iter().zip(dir).map(|(b, e)| -s * b + c * e).collect();
    (p, t)
}

/// Builds a map from its recipe after checking that the pieces tile the
/// domain and that all declared values lie on M.
pub fn build_bv(recipe: &BvRecipe, m: &ManifoldHandle) -> Result<BvMap> {
    let dom = BoxDomain::new(recipe.domain.lo.clone(), recipe.domain.hi.clone())?;
    let n = dom.dim();
    if recipe.pieces.is_empty() {
        return Err(Error::InvalidRecipe("recipe has no pieces".into()));
    }
    let mut volume = 0.0;
    for (i, piece) in recipe.pieces.iter().enumerate() {
        let r = piece.region();
        BoxDomain::new(r.lo.clone(), r.hi.clone())?;
        if r.dim() != n || !dom.contains_box(r) {
            return Err(Error::InvalidRecipe(format!("piece {i} is not a sub-box of the domain")));
        }
        for (j, other) in recipe.pieces.iter().enumerate().skip(i + 1) {
            if r.overlap(other.region()) > GEOM_TOL * dom.volume() {
                return Err(Error::InvalidRecipe(format!("pieces {i} and {j} overlap")));
            }
        }
        volume += r.volume();
        match piece {
            PieceRecipe::Constant { value, .. } => on_manifold(m, value, "constant value")?,
            PieceRecipe::GreatCircle { base, dir, angle, .. } => {
                check_circle(m, base, dir)?;
                if angle.dim() != n {
                    return Err(Error::InvalidRecipe("angle expression has the wrong dimension".into()));
                }
            }
            PieceRecipe::TwoPhase { a, b, normal, .. } => {
                on_manifold(m, a, "phase a")?;
                on_manifold(m, b, "phase b")?;
                if normal.len() != n || (linalg::norm(normal) - 1.0).abs() > GEOM_TOL {
                    return Err(Error::InvalidRecipe("interface normal must be a unit N-vector".into()));
                }
            }
            PieceRecipe::Cantor {
                base, dir, axis, total, ..
            } => {
                check_circle(m, base, dir)?;
                if *axis >= n || !total.is_finite() {
                    return Err(Error::InvalidRecipe("Cantor axis out of range".into()));
                }
            }
            PieceRecipe::Declared { value, gradient, .. } => {
                on_manifold(m, value, "declared value")?;
                if gradient.rows() != m.ambient_dim() || gradient.cols() != n {
                    return Err(Error::InvalidRecipe("declared gradient must be d×N".into()));
                }
            }
        }
    }
    if (volume - dom.volume()).abs() > 1e-9 * dom.volume() {
        return Err(Error::InvalidRecipe(format!(
            "pieces cover volume {volume}, domain has {}",
            dom.volume()
        )));
    }
    Ok(BvMap {
        domain: dom,
        manifold: m.clone(),
        pieces: recipe.pieces.clone(),
    })
}

/// Quadrature densities: points per piece in 1D, per axis in 2D.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    pub points_1d: usize,
    pub points_per_axis_2d: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self {
            points_1d: 1 << 10,
            points_per_axis_2d: 1 << 7,
        }
    }
}

impl Quadrature {
    fn per_axis(&self, dim: usize) -> usize {
        if dim == 1 {
            self.points_1d
        } else {
            self.points_per_axis_2d
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcSample {
    pub x: Vec<f64>,
    pub weight: f64,
    pub value: Vec<f64>,
    pub gradient: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpSample {
    pub x: Vec<f64>,
    /// H^{N−1} weight.
    pub weight: f64,
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
    /// Points from u⁻ to u⁺.
    pub normal: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CantorSample {
    pub x: Vec<f64>,
    /// |D^c u| mass.
    pub weight: f64,
    /// Precise representative ũ.
    pub value: Vec<f64>,
    /// dD^c u / d|D^c u|.
    pub direction: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeDecomposition {
    pub ac: Vec<AcSample>,
    pub jump: Vec<JumpSample>,
    pub cantor: Vec<CantorSample>,
    /// |D^a u|(Ω), |D^j u|(Ω), |D^c u|(Ω).
    pub total_variation: [f64; 3],
    /// H^{N−1}(S_u).
    pub jump_measure: f64,
}

impl BvMap {
    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn manifold(&self) -> &ManifoldHandle {
        &self.manifold
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    fn piece_value(piece: &PieceRecipe, x: &[f64]) -> Vec<f64> {
        match piece {
            PieceRecipe::Constant { value, .. } | PieceRecipe::Declared { value, .. } => value.clone(),
            PieceRecipe::GreatCircle { base, dir, angle, .. } => circle_point(base, dir, angle.eval(x).0).0,
            PieceRecipe::TwoPhase {
                a, b, normal, offset, ..
            } => {
                if linalg::dot(x, normal) > *offset {
                    a.clone()
                } else {
                    b.clone()
                }
            }
            PieceRecipe::Cantor {
                region,
                base,
                dir,
                start,
                total,
                axis,
                depth,
            } => {
                let s = (x[*axis] - region.lo[*axis]) / (region.hi[*axis] - region.lo[*axis]);
                circle_point(base, dir, start + total * staircase(s, *depth)).0
            }
        }
    }

    fn locate(&self, x: &[f64]) -> Option<&PieceRecipe> {
        let inside = |r: &BoxDomain, strict: bool| {
            (0..self.dim()).all(|k| {
                if strict {
                    x[k] > r.lo[k] && x[k] < r.hi[k]
                } else {
                    x[k] >= r.lo[k] && x[k] <= r.hi[k]
                }
            })
        };
        self.pieces
            .iter()
            .find(|p| inside(p.region(), true))
            .or_else(|| self.pieces.iter().find(|p| inside(p.region(), false)))
    }

    /// Value at x (the precise representative off the jump set).
    pub fn value(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.locate(x).map(|p| Self::piece_value(p, x))
    }

    /// Quadrature description of Du split into its three parts.
    pub fn decompose(&self, quad: &Quadrature) -> DerivativeDecomposition {
        let n = self.dim();
        let d = self.manifold.ambient_dim();
        let per_axis = quad.per_axis(n);
        let mut ac = Vec::new();
        let mut jump = Vec::new();
        let mut cantor = Vec::new();
        for piece in &self.pieces {
            let region = piece.region();
            match piece {
                PieceRecipe::GreatCircle { base, dir, angle, .. } => {
                    let (pts, w) = region.midpoints(per_axis);
                    for x in pts {
                        let (theta, grad) = angle.eval(&x);
                        let (p, t) = circle_point(base, dir, theta);
                        let cols: Vec<Vec<f64>> = grad.iter().map(|g| t.iter().map(|v| v * g).collect()).collect();
                        ac.push(AcSample {
                            x,
                            weight: w,
                            value: p,
                            gradient: Matrix::from_columns(&cols),
                        });
                    }
                }
                PieceRecipe::Declared { value, gradient, .. } => {
                    let (pts, w) = region.midpoints(per_axis);
                    for x in pts {
                        ac.push(AcSample {
                            x,
                            weight: w,
                            value: value.clone(),
                            gradient: gradient.clone(),
                        });
                    }
                }
                PieceRecipe::TwoPhase {
                    a, b, normal, offset, ..
                } => {
                    for (x, w) in hyperplane_samples(region, normal, *offset, per_axis) {
                        jump.push(JumpSample {
                            x,
                            weight: w,
                            plus: a.clone(),
                            minus: b.clone(),
                            normal: normal.clone(),
                        });
                    }
                }
                PieceRecipe::Cantor {
                    base,
                    dir,
                    start,
                    total,
                    axis,
                    depth,
                    ..
                } => {
                    let len = 3f64.powi(-(*depth as i32));
                    let rise = 0.5f64.powi(*depth as i32);
                    let width = region.hi[*axis] - region.lo[*axis];
                    // Cross-section through the other axes.
                    let cross: Vec<(Vec<f64>, f64)> = if n == 1 {
                        vec![(vec![], 1.0)]
                    } else {
                        let o = 1 - axis;
                        let h = (region.hi[o] - region.lo[o]) / per_axis as f64;
                        (0..per_axis)
                            .map(|i| (vec![region.lo[o] + (i as f64 + 0.5) * h], h))
                            .collect()
                    };
                    let sign = total.signum();
                    for (i, left) in cantor_intervals(*depth).into_iter().enumerate() {
                        let s = left + 0.5 * len;
                        let theta = start + total * rise * (i as f64 + 0.5);
                        let (p, t) = circle_point(base, dir, theta);
                        for (other, h) in &cross {
                            let mut x = vec![0.0; n];
                            x[*axis] = region.lo[*axis] + s * width;
                            if n == 2 {
                                x[1 - axis] = other[0];
                            }
                            let mut cols = vec![vec![0.0; d]; n];
                            cols[*axis] = t.iter().map(|v| sign * v).collect();
                            cantor.push(CantorSample {
                                x,
                                weight: total.abs() * rise * h,
                                value: p.clone(),
                                direction: Matrix::from_columns(&cols),
                            });
                        }
                    }
                }
                PieceRecipe::Constant { .. } => {}
            }
        }
        jump.extend(self.face_jumps(per_axis));
        let tv_ac = ac.iter().fold(0.0, |t, s| t + s.weight * s.gradient.norm());
        let tv_jump = jump
            .iter()
            .fold(0.0, |t, s| t + s.weight * linalg::dist(&s.plus, &s.minus));
        let tv_cantor = cantor.iter().fold(0.0, |t, s| t + s.weight);
        let jump_measure = jump.iter().fold(0.0, |t, s| t + s.weight);
        DerivativeDecomposition {
            ac,
            jump,
            cantor,
            total_variation: [tv_ac, tv_jump, tv_cantor],
            jump_measure,
        }
    }

    /// Jumps across shared faces of neighbouring pieces.
    fn face_jumps(&self, per_axis: usize) -> Vec<JumpSample> {
        let n = self.dim();
        let mut out = Vec::new();
        for (i, lower) in self.pieces.iter().enumerate() {
            for (j, upper) in self.pieces.iter().enumerate() {
                if i == j {
                    continue;
                }
                let (rl, ru) = (lower.region(), upper.region());
                for k in 0..n {
                    if (rl.hi[k] - ru.lo[k]).abs() > GEOM_TOL {
                        continue;
                    }
                    let face: Vec<(Vec<f64>, f64)> = if n == 1 {
                        vec![(vec![rl.hi[0]], 1.0)]
                    } else {
                        let o = 1 - k;
                        let lo = rl.lo[o].max(ru.lo[o]);
                        let hi = rl.hi[o].min(ru.hi[o]);
                        if hi - lo <= GEOM_TOL {
                            continue;
                        }
                        let h = (hi - lo) / per_axis as f64;
                        (0..per_axis)
                            .map(|q| {
                                let mut x = vec![0.0; 2];
                                x[k] = rl.hi[k];
                                x[o] = lo + (q as f64 + 0.5) * h;
                                (x, h)
                            })
                            .collect()
                    };
                    let mut normal = vec![0.0; n];
                    normal[k] = 1.0;
                    for (x, w) in face {
                        let minus = Self::piece_value(lower, &x);
                        let plus = Self::piece_value(upper, &x);
                        if linalg::dist(&plus, &minus) > GEOM_TOL {
                            out.push(JumpSample {
                                x,
                                weight: w,
                                plus,
                                minus,
                                normal: normal.clone(),
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// Midpoint samples of {x·ν = c} inside the box with their H^{N−1} weights.
fn hyperplane_samples(region: &BoxDomain, nu: &[f64], c: f64, per_axis: usize) -> Vec<(Vec<f64>, f64)> {
    if nu.len() == 1 {
        let x = c / nu[0];
        return if x > region.lo[0] && x < region.hi[0] {
            vec![(vec![x], 1.0)]
        } else {
            vec![]
        };
    }
    // Clip the line p0 + s·τ against the box.
    let tau = [-nu[1], nu[0]];
    let p0 = [c * nu[0], c * nu[1]];
    let (mut s0, mut s1) = (f64::NEG_INFINITY, f64::INFINITY);
    for k in 0..2 {
        if tau[k].abs() < 1e-15 {
            if p0[k] <= region.lo[k] || p0[k] >= region.hi[k] {
                return vec![];
            }
        } else {
            let a = (region.lo[k] - p0[k]) / tau[k];
            let b = (region.hi[k] - p0[k]) / tau[k];
            s0 = s0.max(a.min(b));
            s1 = s1.min(a.max(b));
        }
    }
    if s1 - s0 <= GEOM_TOL {
        return vec![];
    }
    let h = (s1 - s0) / per_axis as f64;
    (0..per_axis)
        .map(|q| {
            let s = s0 + (q as f64 + 0.5) * h;
            (vec![p0[0] + s * tau[0], p0[1] + s * tau[1]], h)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangencyReport {
    /// max |∇u − P_u ∇u| over AC samples.
    pub ac_normal: f64,
    pub ac_location: Option<Vec<f64>>,
    /// max |A − P_ũ A| over Cantor samples.
    pub cantor_normal: f64,
    pub cantor_location: Option<Vec<f64>>,
    /// Largest second singular value of A.
    pub cantor_rank_excess: f64,
    /// Jump traces on M and unit normals.
    pub jumps_ok: bool,
    pub pass: bool,
}

pub const TANGENCY_TOL: f64 = 1e-8;
pub const RANK_TOL: f64 = 1e-10;

fn normal_part(m: &ManifoldHandle, s: &[f64], a: &Matrix) -> f64 {
    let mut p = a.clone();
    for j in 0..a.cols() {
        m.tangent_project_vec(s, p.column_mut(j));
    }
    a.sub(&p).norm()
}

/// Checks ∇u ∈ [T_u M]^N, A ∈ [T_ũ M]^N with A of rank one, and the jump
/// traces.
pub fn verify_tangency(u: &BvMap, quad: &Quadrature) -> TangencyReport {
    let dec = u.decompose(quad);
    let m = &u.manifold;
    let mut rep = TangencyReport {
        ac_normal: 0.0,
        ac_location: None,
        cantor_normal: 0.0,
        cantor_location: None,
        cantor_rank_excess: 0.0,
        jumps_ok: true,
        pass: false,
    };
    for s in &dec.ac {
        let e = normal_part(m, &s.value, &s.gradient);
        if e > rep.ac_normal {
            rep.ac_normal = e;
            rep.ac_location = Some(s.x.clone());
        }
    }
    for s in &dec.cantor {
        let e = normal_part(m, &s.value, &s.direction);
        if e > rep.cantor_normal {
            rep.cantor_normal = e;
            rep.cantor_location = Some(s.x.clone());
        }
        let sv = s.direction.singular_values();
        if sv.len() > 1 {
            rep.cantor_rank_excess = rep.cantor_rank_excess.max(sv[1]);
        }
    }
    for s in &dec.jump {
        let ok = m.distance_to(&s.plus) <= GEOM_TOL
            && m.distance_to(&s.minus) <= GEOM_TOL
            && (linalg::norm(&s.normal) - 1.0).abs() <= GEOM_TOL;
        rep.jumps_ok &= ok;
    }
    rep.pass = rep.ac_normal <= TANGENCY_TOL
        && rep.cantor_normal <= TANGENCY_TOL
        && rep.cantor_rank_excess <= RANK_TOL
        && rep.jumps_ok;
    rep
}

/// Evaluators of Tf_hom, Tf^∞_hom and ϑ_hom.
pub trait HomDensities: Sync {
    fn bulk(&self, s: &[f64], xi: &Matrix) -> Result<f64>;
    fn bulk_recession(&self, s: &[f64], xi: &Matrix) -> Result<f64>;
    fn surface(&self, a: &[f64], b: &[f64], nu: &[f64]) -> Result<f64>;
}

fn check_tangent(m: &ManifoldHandle, s: &[f64], xi: &Matrix) -> Result<()> {
    if s.len() != m.ambient_dim() || xi.rows() != s.len() {
        return Err(Error::EvaluatorDomain("state and slope dimensions do not match M".into()));
    }
    if m.distance_to(s) > 1e-9 {
        return Err(Error::EvaluatorDomain("state is not on M".into()));
    }
    let e = normal_part(m, s, xi);
    if e > TANGENCY_TOL * (1.0 + xi.norm()) {
        return Err(Error::EvaluatorDomain(format!("slope has normal component {e:e}")));
    }
    Ok(())
}

fn check_phases(m: &ManifoldHandle, a: &[f64], b: &[f64], nu: &[f64]) -> Result<()> {
    if m.distance_to(a) > 1e-9 || m.distance_to(b) > 1e-9 {
        return Err(Error::EvaluatorDomain("phases are not on M".into()));
    }
    if (linalg::norm(nu) - 1.0).abs() > 1e-9 {
        return Err(Error::EvaluatorDomain("normal is not a unit vector".into()));
    }
    Ok(())
}

/// Stubs Tf_hom = Tf^∞_hom = c_bulk|ξ| and ϑ_hom = c_surface·d_M(a, b), the
/// densities of f = c|ξ| when c_surface = c_bulk.
#[derive(Debug, Clone)]
pub struct ClosedFormDensities {
    pub manifold: ManifoldHandle,
    pub bulk_scale: f64,
    pub surface_scale: f64,
}

impl HomDensities for ClosedFormDensities {
    fn bulk(&self, s: &[f64], xi: &Matrix) -> Result<f64> {
        check_tangent(&self.manifold, s, xi)?;
        Ok(self.bulk_scale * xi.norm())
    }

    fn bulk_recession(&self, s: &[f64], xi: &Matrix) -> Result<f64> {
        self.bulk(s, xi)
    }

    fn surface(&self, a: &[f64], b: &[f64], nu: &[f64]) -> Result<f64> {
        check_phases(&self.manifold, a, b, nu)?;
        Ok(self.surface_scale * self.manifold.geodesic_distance_raw(a, b))
    }
}

/// Densities computed by the cell and interface solvers.
#[derive(Debug, Clone)]
pub struct SolverDensities {
    pub integrand: Integrand,
    pub manifold: ManifoldHandle,
    pub cell: CellConfig,
    pub recession_scales: Vec<f64>,
    pub interface: InterfaceConfig,
    /// Largest |ξ| the solvers are trusted with.
    pub max_slope: f64,
}

impl SolverDensities {
    fn point(&self, s: &[f64]) -> Result<ManifoldPoint> {
        self.manifold
            .point(s)
            .map_err(|e| Error::EvaluatorDomain(e.to_string()))
    }

    fn check_slope(&self, s: &[f64], xi: &Matrix) -> Result<()> {
        check_tangent(&self.manifold, s, xi)?;
        if xi.cols() != self.integrand.space_dim() {
            return Err(Error::EvaluatorDomain("slope has the wrong number of columns".into()));
        }
        if xi.norm() > self.max_slope {
            return Err(Error::EvaluatorDomain(format!(
                "|ξ| = {} exceeds the validated bound {}",
                xi.norm(),
                self.max_slope
            )));
        }
        Ok(())
    }

    /// Projects away the rounding-level normal part the solvers reject.
    fn tangent(&self, s: &[f64], xi: &Matrix) -> Matrix {
        let mut p = xi.clone();
        for j in 0..xi.cols() {
            self.manifold.tangent_project_vec(s, p.column_mut(j));
        }
        p
    }
}

impl HomDensities for SolverDensities {
    fn bulk(&self, s: &[f64], xi: &Matrix) -> Result<f64> {
        self.check_slope(s, xi)?;
        let p = self.point(s)?;
        Ok(tf_hom(&self.integrand, &self.manifold, &p, &self.tangent(s, xi), &self.cell)?.value)
    }

    fn bulk_recession(&self, s: &[f64], xi: &Matrix) -> Result<f64> {
        self.check_slope(s, xi)?;
        let p = self.point(s)?;
        let xi = self.tangent(s, xi);
        Ok(tf_hom_recession(&self.integrand, &self.manifold, &p, &xi, &self.recession_scales, &self.cell)?.value)
    }

    fn surface(&self, a: &[f64], b: &[f64], nu: &[f64]) -> Result<f64> {
        check_phases(&self.manifold, a, b, nu)?;
        if nu.len() != self.integrand.space_dim() {
            return Err(Error::EvaluatorDomain("normal has the wrong dimension".into()));
        }
        if linalg::dist(a, b) == 0.0 {
            return Ok(0.0);
        }
        let (pa, pb) = (self.point(a)?, self.point(b)?);
        Ok(theta_hom(&self.integrand, &self.manifold, &pa, &pb, nu, &self.interface)?
            .estimate
            .value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FhomBreakdown {
    pub bulk: f64,
    pub surface: f64,
    pub cantor: f64,
    pub total: f64,
}

/// F_hom(u) = ∫ Tf_hom(u, ∇u) + ∫_{S_u} ϑ_hom(u⁺, u⁻, ν_u) + ∫ Tf^∞_hom(ũ, A) d|D^c u|.
pub fn evaluate_fhom(u: &BvMap, densities: &dyn HomDensities, quad: &Quadrature) -> Result<FhomBreakdown> {
    let dec = u.decompose(quad);
    let bulk: Vec<f64> = dec
        .ac
        .par_iter()
        .map(|s| densities.bulk(&s.value, &s.gradient).map(|v| v * s.weight))
        .collect::<Result<_>>()?;
    let surface: Vec<f64> = dec
        .jump
        .par_iter()
        .map(|s| densities.surface(&s.plus, &s.minus, &s.normal).map(|v| v * s.weight))
        .collect::<Result<_>>()?;
    let cantor: Vec<f64> = dec
        .cantor
        .par_iter()
        .map(|s| densities.bulk_recession(&s.value, &s.direction).map(|v| v * s.weight))
        .collect::<Result<_>>()?;
    let sum = |v: &[f64]| v.iter().fold(0.0, |acc, x| acc + x);
    let (bulk, surface, cantor) = (sum(&bulk), sum(&surface), sum(&cantor));
    Ok(FhomBreakdown {
        bulk,
        surface,
        cantor,
        total: bulk + surface + cantor,
    })
}

/// Closed-form fixtures on the unit cube (M a round sphere, a, b ∈ M).
pub mod fixtures {
    use super::*;
    use std::f64::consts::PI;

    fn frame(d: usize) -> (Vec<f64>, Vec<f64>) {
        let mut e1 = vec![0.0; d];
        let mut e2 = vec![0.0; d];
        e1[0] = 1.0;
        e2[1] = 1.0;
        (e1, e2)
    }

    /// One full turn of a great circle along x₁: |∇u| = 2π.
    pub fn full_turn(dim: usize, ambient: usize) -> BvRecipe {
        let (base, dir) = frame(ambient);
        let mut slope = vec![0.0; dim];
        slope[0] = 2.0 * PI;
        BvRecipe {
            domain: BoxDomain::unit(dim),
            pieces: vec![PieceRecipe::GreatCircle {
                region: BoxDomain::unit(dim),
                base,
                dir,
                angle: ScalarExpr::Affine { offset: 0.0, slope },
            }],
        }
    }

    /// `left` on {x₁ < ½}, `right` on {x₁ > ½}.
    pub fn single_jump(dim: usize, left: Vec<f64>, right: Vec<f64>) -> BvRecipe {
        let mut normal = vec![0.0; dim];
        normal[0] = 1.0;
        BvRecipe {
            domain: BoxDomain::unit(dim),
            pieces: vec![PieceRecipe::TwoPhase {
                region: BoxDomain::unit(dim),
                a: right,
                b: left,
                normal,
                offset: 0.5,
            }],
        }
    }

    /// Staircase turn by 2π along x₁.
    pub fn staircase_turn(dim: usize, ambient: usize, depth: u32) -> BvRecipe {
        let (base, dir) = frame(ambient);
        BvRecipe {
            domain: BoxDomain::unit(dim),
            pieces: vec![PieceRecipe::Cantor {
                region: BoxDomain::unit(dim),
                base,
                dir,
                start: 0.0,
                total: 2.0 * PI,
                axis: 0,
                depth,
            }],
        }
    }

    /// Declared gradient e₁ ⊗ (0.3, …) at e₁, normal to the sphere.
    pub fn normal_gradient(dim: usize, ambient: usize) -> BvRecipe {
        let (value, _) = frame(ambient);
        let cols = (0..dim)
            .map(|j| {
                let mut c = vec![0.0; ambient];
                c[0] = 0.3;
                c[1] = if j == 0 { 1.0 } else { 0.0 };
                c
            })
            .collect::<Vec<_>>();
        BvRecipe {
            domain: BoxDomain::unit(dim),
            pieces: vec![PieceRecipe::Declared {
                region: BoxDomain::unit(dim),
                value,
                gradient: Matrix::from_columns(&cols),
            }],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn circle() -> ManifoldHandle {
        ManifoldHandle::circle()
    }

    fn stubs() -> ClosedFormDensities {
        ClosedFormDensities {
            manifold: circle(),
            bulk_scale: 1.0,
            surface_scale: 1.0,
        }
    }

    fn ac_recipe() -> BvRecipe {
        BvRecipe {
            domain: BoxDomain::unit(1),
            pieces: vec![PieceRecipe::GreatCircle {
                region: BoxDomain::unit(1),
                base: vec![1.0, 0.0],
                dir: vec![0.0, 1.0],
                angle: ScalarExpr::Affine {
                    offset: 0.0,
                    slope: vec![2.0 * PI],
                },
            }],
        }
    }

    fn cantor_recipe(depth: u32) -> BvRecipe {
        BvRecipe {
            domain: BoxDomain::unit(1),
            pieces: vec![PieceRecipe::Cantor {
                region: BoxDomain::unit(1),
                base: vec![1.0, 0.0],
                dir: vec![0.0, 1.0],
                start: 0.0,
                total: 2.0 * PI,
                axis: 0,
                depth,
            }],
        }
    }

    #[test]
    fn pure_ac_map_has_bulk_energy_two_pi() {
        let u = build_bv(&ac_recipe(), &circle()).unwrap();
        let dec = u.decompose(&Quadrature::default());
        assert!(dec.jump.is_empty() && dec.cantor.is_empty());
        let e = evaluate_fhom(&u, &stubs(), &Quadrature::default()).unwrap();
        assert!((e.bulk - 2.0 * PI).abs() < 1e-12);
        assert_eq!((e.surface, e.cantor), (0.0, 0.0));
        assert!(verify_tangency(&u, &Quadrature::default()).pass);
    }

    #[test]
    fn staircase_variation_telescopes() {
        for depth in [0, 1, 5, 12] {
            let u = build_bv(&cantor_recipe(depth), &circle()).unwrap();
            let dec = u.decompose(&Quadrature::default());
            assert!((dec.total_variation[2] - 2.0 * PI).abs() < 1e-10);
            assert_eq!(dec.cantor.len(), 1 << depth);
            let e = evaluate_fhom(&u, &stubs(), &Quadrature::default()).unwrap();
            assert!((e.cantor - 2.0 * PI).abs() < 1e-10);
        }
        assert_eq!(staircase(0.5, 12), 0.5);
        assert!((staircase(1.0, 12) - 1.0).abs() < 1e-15);
        assert!((staircase(0.25, 30) - 1.0 / 3.0).abs() < 1e-9);
        let u = build_bv(&cantor_recipe(12), &circle()).unwrap();
        let rep = verify_tangency(&u, &Quadrature::default());
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn line_interface_has_its_length_as_jump_measure() {
        let (a, b) = (vec![1.0, 0.0], vec![0.0, 1.0]);
        let s = 0.5f64.sqrt();
        let recipe = BvRecipe {
            domain: BoxDomain::unit(2),
            pieces: vec![PieceRecipe::TwoPhase {
                region: BoxDomain::unit(2),
                a: a.clone(),
                b: b.clone(),
                normal: vec![s, s],
                offset: s,
            }],
        };
        let u = build_bv(&recipe, &circle()).unwrap();
        let dec = u.decompose(&Quadrature::default());
        assert!(dec.ac.is_empty() && dec.cantor.is_empty());
        assert!((dec.jump_measure - 2f64.sqrt()).abs() < 1e-12);
        let e = evaluate_fhom(&u, &stubs(), &Quadrature::default()).unwrap();
        assert!((e.surface - 2f64.sqrt() * PI / 2.0).abs() < 1e-12);
        assert!(verify_tangency(&u, &Quadrature::default()).pass);
    }

    #[test]
    fn adjacent_constants_jump_across_their_face() {
        let recipe = BvRecipe {
            domain: BoxDomain::unit(2),
            pieces: vec![
                PieceRecipe::Constant {
                    region: BoxDomain::new(vec![0.0, 0.0], vec![0.5, 1.0]).unwrap(),
                    value: vec![1.0, 0.0],
                },
                PieceRecipe::Constant {
                    region: BoxDomain::new(vec![0.5, 0.0], vec![1.0, 1.0]).unwrap(),
                    value: vec![-1.0, 0.0],
                },
            ],
        };
        let u = build_bv(&recipe, &circle()).unwrap();
        let dec = u.decompose(&Quadrature::default());
        assert!((dec.jump_measure - 1.0).abs() < 1e-12);
        assert!(dec.jump.iter().all(|j| j.normal == vec![1.0, 0.0] && j.plus == vec![-1.0, 0.0]));
        let e = evaluate_fhom(&u, &stubs(), &Quadrature::default()).unwrap();
        assert!((e.total - PI).abs() < 1e-12);
    }

    #[test]
    fn declared_normal_gradient_fails_tangency() {
        let recipe = BvRecipe {
            domain: BoxDomain::unit(1),
            pieces: vec![PieceRecipe::Declared {
                region: BoxDomain::unit(1),
                value: vec![1.0, 0.0],
                gradient: Matrix::from_columns(&[vec![0.3, 1.0]]),
            }],
        };
        let u = build_bv(&recipe, &circle()).unwrap();
        let rep = verify_tangency(&u, &Quadrature::default());
        assert!(!rep.pass);
        assert!((rep.ac_normal - 0.3).abs() < 1e-12);
        assert!(rep.ac_location.is_some());
        assert!(matches!(
            evaluate_fhom(&u, &stubs(), &Quadrature::default()),
            Err(Error::EvaluatorDomain(_))
        ));
    }

    #[test]
    fn recipes_are_validated() {
        let mut r = ac_recipe();
        r.pieces[0] = PieceRecipe::Constant {
            region: BoxDomain::new(vec![0.0], vec![0.5]).unwrap(),
            value: vec![1.0, 0.0],
        };
        assert!(matches!(build_bv(&r, &circle()), Err(Error::InvalidRecipe(m)) if m.contains("volume")));
        let r = BvRecipe {
            domain: BoxDomain::unit(1),
            pieces: vec![PieceRecipe::Constant {
                region: BoxDomain::unit(1),
                value: vec![2.0, 0.0],
            }],
        };
        assert!(matches!(build_bv(&r, &circle()), Err(Error::InvalidRecipe(m)) if m.contains("distance")));
    }

    #[test]
    fn partition_additivity() {
        let whole = build_bv(&ac_recipe(), &circle()).unwrap();
        let halves = BvRecipe {
            domain: BoxDomain::unit(1),
            pieces: [(0.0, 0.5), (0.5, 1.0)]
                .iter()
                .map(|&(lo, hi)| PieceRecipe::GreatCircle {
                    region: BoxDomain::new(vec![lo], vec![hi]).unwrap(),
                    base: vec![1.0, 0.0],
                    dir: vec![0.0, 1.0],
                    angle: ScalarExpr::Affine {
                        offset: 0.0,
                        slope: vec![2.0 * PI],
                    },
                })
                .collect(),
        };
        let split = build_bv(&halves, &circle()).unwrap();
        let q = Quadrature::default();
        let a = evaluate_fhom(&whole, &stubs(), &q).unwrap().total;
        let b = evaluate_fhom(&split, &stubs(), &q).unwrap().total;
        assert!((a - b).abs() < 1e-9);
    }
}
