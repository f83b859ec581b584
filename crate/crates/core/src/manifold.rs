//! Geometry of the constraint manifold M ⊂ R^d.
//!
//! Closed-form kinds (circle, spheres) cover everything the solvers are
//! validated on. The sampled kind describes a hypersurface through a
//! signed-distance lattice and is kept for extensibility.

mod sampled;

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

pub use sampled::SampledSurface;

/// Default number of samples stored along a geodesic transition profile.
pub const DEFAULT_CURVE_SAMPLES: usize = 257;

#[derive(Debug, Clone)]
pub enum ManifoldKind {
    Circle,
    Sphere,
    Sampled(Arc<SampledSurface>),
}

/// A compact connected submanifold of R^d with its projection services.
///
/// Handles are immutable once built and cheap to clone.
#[derive(Debug, Clone)]
pub struct ManifoldHandle {
    kind: ManifoldKind,
    ambient_dim: usize,
    tube_radius: f64,
    diameter: f64,
    curve_samples: usize,
}

/// A point of M in ambient coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldPoint {
    coords: Vec<f64>,
}

impl ManifoldPoint {
    /// Wraps coordinates without checking membership. Callers own the invariant.
    pub fn new_unchecked(coords: Vec<f64>) -> Self {
        Self { coords }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// N tangent vectors sharing a basepoint: a slope in [T_s M]^N.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentMatrix {
    columns: Matrix,
    basepoint: ManifoldPoint,
}

impl TangentMatrix {
    pub fn matrix(&self) -> &Matrix {
        &self.columns
    }

    pub fn basepoint(&self) -> &ManifoldPoint {
        &self.basepoint
    }

    pub fn into_matrix(self) -> Matrix {
        self.columns
    }
}

impl ManifoldHandle {
    /// The unit circle S^1 ⊂ R^2.
    pub fn circle() -> Self {
        Self {
            kind: ManifoldKind::Circle,
            ambient_dim: 2,
            tube_radius: 0.5,
            diameter: PI,
            curve_samples: DEFAULT_CURVE_SAMPLES,
        }
    }

    /// The unit sphere S^{d-1} ⊂ R^d, `d >= 2`.
    pub fn sphere(ambient_dim: usize) -> Result<Self> {
        if ambient_dim < 2 {
            return Err(Error::InvalidInput(format!(
                "sphere needs ambient dimension >= 2, got {ambient_dim}"
            )));
        }
        if ambient_dim == 2 {
            return Ok(Self::circle());
        }
        Ok(Self {
            kind: ManifoldKind::Sphere,
            ambient_dim,
            tube_radius: 0.5,
            diameter: PI,
            curve_samples: DEFAULT_CURVE_SAMPLES,
        })
    }

    /// A hypersurface given by a signed-distance lattice. The tube radius and
    /// diameter must be declared by the caller.
    pub fn sampled(surface: SampledSurface, tube_radius: f64, diameter: f64) -> Result<Self> {
        if !(tube_radius > 0.0) || !(diameter > 0.0) {
            return Err(Error::InvalidInput(
                "sampled manifold needs positive tube radius and diameter".into(),
            ));
        }
        Ok(Self {
            ambient_dim: surface.ambient_dim(),
            kind: ManifoldKind::Sampled(Arc::new(surface)),
            tube_radius,
            diameter,
            curve_samples: DEFAULT_CURVE_SAMPLES,
        })
    }

    pub fn with_curve_samples(mut self, count: usize) -> Self {
        self.curve_samples = count.max(3);
        self
    }

    pub fn kind(&self) -> &ManifoldKind {
        &self.kind
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ManifoldKind::Circle => "circle",
            ManifoldKind::Sphere => "sphere",
            ManifoldKind::Sampled(_) => "sampled",
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    /// Dimension of M itself.
    pub fn intrinsic_dim(&self) -> usize {
        self.ambient_dim - 1
    }

    pub fn tube_radius(&self) -> f64 {
        self.tube_radius
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    fn is_round(&self) -> bool {
        matches!(self.kind, ManifoldKind::Circle | ManifoldKind::Sphere)
    }

    /// Unsigned distance from `p` to M.
    pub fn distance_to(&self, p: &[f64]) -> f64 {
        match &self.kind {
            ManifoldKind::Circle | ManifoldKind::Sphere => (linalg::norm(p) - 1.0).abs(),
            ManifoldKind::Sampled(s) => s.distance(p),
        }
    }

    /// Nearest point of M without the tube check. `None` where the
    /// projection is undefined (the center of a sphere) or fails to converge.
    pub fn nearest_point(&self, p: &[f64]) -> Option<Vec<f64>> {
        match &self.kind {
            ManifoldKind::Circle | ManifoldKind::Sphere => linalg::normalized(p),
            ManifoldKind::Sampled(s) => s.project(p),
        }
    }

    /// Nearest-point projection Π onto M. Sampled surfaces accept points
    /// strictly inside the δ0-tube; spheres accept everything but the center.
    pub fn project(&self, p: &[f64]) -> Result<ManifoldPoint> {
        self.check_dim(p)?;
        let distance = self.distance_to(p);
        // Radial projection is defined off the center; δ0 only shapes the cutoff there.
        let inside = match self.kind {
            ManifoldKind::Circle | ManifoldKind::Sphere => linalg::norm(p) > 0.0,
            ManifoldKind::Sampled(_) => distance < self.tube_radius,
        };
        if !inside {
            return Err(Error::OutOfTube {
                distance,
                tube_radius: self.tube_radius,
            });
        }
        self.nearest_point(p)
            .map(ManifoldPoint::new_unchecked)
            .ok_or(Error::OutOfTube {
                distance,
                tube_radius: self.tube_radius,
            })
    }

    /// Projects in place; used by the nodal solvers where the step size
    /// keeps iterates well inside the tube.
    pub(crate) fn project_in_place(&self, p: &mut [f64]) {
        match &self.kind {
            ManifoldKind::Circle | ManifoldKind::Sphere => {
                let n = linalg::norm(p);
                if n > 0.0 {
                    linalg::scale(1.0 / n, p);
                }
            }
            ManifoldKind::Sampled(s) => {
                if let Some(q) = s.project(p) {
                    p.copy_from_slice(&q);
                }
            }
        }
    }

    /// Builds a manifold point from coordinates that should already lie on M.
    pub fn point(&self, coords: &[f64]) -> Result<ManifoldPoint> {
        self.check_dim(coords)?;
        let d = self.distance_to(coords);
        if d > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "point {coords:?} is at distance {d:e} from the manifold"
            )));
        }
        let p = self.project(coords)?;
        Ok(p)
    }

    fn check_dim(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.ambient_dim {
            return Err(Error::Dimension(format!(
                "expected a {}-vector, got length {}",
                self.ambient_dim,
                p.len()
            )));
        }
        Ok(())
    }

    /// Unit normal field used by the tangent projector (codimension one).
    fn normal(&self, s: &[f64]) -> Vec<f64> {
        match &self.kind {
            ManifoldKind::Circle | ManifoldKind::Sphere => {
                linalg::normalized(s).unwrap_or_else(|| unit(self.ambient_dim, 0))
            }
            ManifoldKind::Sampled(surf) => surf.normal(s),
        }
    }

    /// P_s as a row-major d×d symmetric matrix.
    pub fn tangent_projector(&self, s: &[f64]) -> Vec<f64> {
        let d = self.ambient_dim;
        let n = self.normal(s);
        let mut p = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                p[i * d + j] = if i == j { 1.0 } else { 0.0 } - n[i] * n[j];
            }
        }
        p
    }

    /// `v - (v·n) n` in place.
    pub fn tangent_project_vec(&self, s: &[f64], v: &mut [f64]) {
        let n = self.normal(s);
        let c = linalg::dot(v, &n);
        linalg::axpy(-c, &n, v);
    }

    /// Columnwise orthogonal projection of ξ onto T_s M.
    pub fn tangent_project(&self, s: &ManifoldPoint, xi: &Matrix) -> TangentMatrix {
        let mut out = xi.clone();
        for j in 0..xi.cols() {
            self.tangent_project_vec(s.coords(), out.column_mut(j));
        }
        TangentMatrix {
            columns: out,
            basepoint: s.clone(),
        }
    }

    /// Wraps ξ as a tangent matrix after checking each column is tangent to 1e-10.
    pub fn tangent_matrix(&self, s: &ManifoldPoint, xi: Matrix) -> Result<TangentMatrix> {
        let projected = self.tangent_project(s, &xi);
        let gap = linalg::dist(projected.matrix().as_slice(), xi.as_slice());
        if gap > 1e-10 * (1.0 + xi.norm()) {
            return Err(Error::InvalidInput(format!(
                "slope has a normal component of size {gap:e}"
            )));
        }
        Ok(TangentMatrix {
            columns: xi,
            basepoint: s.clone(),
        })
    }

    /// Orthonormal basis of T_s M, built by pivoted Gram–Schmidt on the
    /// standard basis; deterministic in `s`.
    pub fn tangent_basis(&self, s: &[f64]) -> Vec<Vec<f64>> {
        let d = self.ambient_dim;
        let mut accepted: Vec<Vec<f64>> = vec![self.normal(s)];
        let mut candidates: Vec<Vec<f64>> = (0..d).map(|k| unit(d, k)).collect();
        while accepted.len() < d {
            let mut best: Option<(usize, Vec<f64>, f64)> = None;
            for (k, c) in candidates.iter().enumerate() {
                let mut r = c.clone();
                for q in &accepted {
                    let proj = linalg::dot(&r, q);
                    linalg::axpy(-proj, q, &mut r);
                }
                let n = linalg::norm(&r);
                if best.as_ref().map_or(true, |b| n > b.2 + 1e-12) {
                    best = Some((k, r, n));
                }
            }
            let (k, mut r, n) = best.expect("standard basis spans R^d");
            linalg::scale(1.0 / n, &mut r);
            accepted.push(r);
            candidates.remove(k);
        }
        accepted.remove(0);
        accepted
    }

    /// Geodesic distance d_M(a, b).
    pub fn geodesic_distance(&self, a: &ManifoldPoint, b: &ManifoldPoint) -> f64 {
        self.geodesic_distance_raw(a.coords(), b.coords())
    }

    pub(crate) fn geodesic_distance_raw(&self, a: &[f64], b: &[f64]) -> f64 {
        match &self.kind {
            ManifoldKind::Circle | ManifoldKind::Sphere => {
                let c = linalg::dist(a, b).min(2.0);
                2.0 * (0.5 * c).asin()
            }
            ManifoldKind::Sampled(s) => s.geodesic_path(a, b, 65).1,
        }
    }

    /// Ratio ρ(c) of geodesic to chord length for a chord of length `c`, and
    /// its derivative. Nodal solvers use it to measure a discrete difference by
    /// the length of the geodesic joining the two nodes. On sampled manifolds
    /// the chord is used as is.
    #[inline]
    pub fn chord_arc(&self, c: f64) -> (f64, f64) {
        if !self.is_round() {
            return (1.0, 0.0);
        }
        if c < 1e-3 {
            let c2 = c * c;
            // series of 2 asin(c/2) / c
            return (1.0 + c2 / 24.0 + 3.0 * c2 * c2 / 640.0, c / 12.0 + 3.0 * c2 * c / 160.0);
        }
        let c = c.min(2.0);
        let arc = 2.0 * (0.5 * c).asin();
        let rho = arc / c;
        let cc = c.min(2.0 - 1e-9);
        let darc = 1.0 / (1.0 - 0.25 * cc * cc).sqrt();
        (rho, (darc * c - arc) / (c * c))
    }

    /// Point at fraction `s ∈ [0,1]` of a minimizing geodesic from `p` to `q`.
    ///
    /// Antipodal pairs on spheres use the great circle through the plane
    /// spanned by `p` and the first standard basis vector not parallel to `p`.
    pub fn geodesic_point(&self, p: &[f64], q: &[f64], s: f64) -> Vec<f64> {
        if s <= 0.0 {
            return p.to_vec();
        }
        if s >= 1.0 {
            return q.to_vec();
        }
        match &self.kind {
            ManifoldKind::Circle | ManifoldKind::Sphere => sphere_geodesic_point(p, q, s),
            ManifoldKind::Sampled(surf) => {
                let (path, _) = surf.geodesic_path(p, q, 65);
                interpolate_polyline(&path, s, |x| surf.project(x))
            }
        }
    }

    /// Transition profile in G(a,b): equal to `b` for t ≤ −1/2, `a` for
    /// t ≥ 1/2, running along a minimizing geodesic in between.
    pub fn geodesic_profile(&self, a: &ManifoldPoint, b: &ManifoldPoint) -> GeodesicCurve {
        GeodesicCurve::new(self, a, b, self.curve_samples)
    }
}

fn unit(d: usize, k: usize) -> Vec<f64> {
    let mut e = vec![0.0; d];
    e[k] = 1.0;
    e
}

fn sphere_geodesic_point(p: &[f64], q: &[f64], s: f64) -> Vec<f64> {
    let d = p.len();
    let chord = linalg::dist(p, q);
    if chord < 1e-15 {
        return p.to_vec();
    }
    let theta = 2.0 * (0.5 * chord.min(2.0)).asin();
    let antipodal = p.iter().zip(q).map(|(a, b)| (a + b) * (a + b)).sum::<f64>().sqrt() < 1e-9;
    let w = if antipodal {
        let k = (0..d)
            .find(|&k| p[k].abs() < 1.0 - 1e-12)
            .unwrap_or(0);
        let mut w = unit(d, k);
        let c = p[k];
        linalg::axpy(-c, p, &mut w);
        linalg::normalized(&w).expect("basis vector not parallel to p")
    } else {
        let c = theta.cos();
        let mut w: Vec<f64> = q.iter().zip(p).map(|(qi, pi)| qi - c * pi).collect();
        let n = linalg::norm(&w);
        linalg::scale(1.0 / n, &mut w);
        w
    };
    let phi = s * theta;
    let (sn, cs) = phi.sin_cos();
    let mut out: Vec<f64> = p.iter().zip(&w).map(|(pi, wi)| cs * pi + sn * wi).collect();
    let n = linalg::norm(&out);
    linalg::scale(1.0 / n, &mut out);
    out
}

/// Point at arclength fraction `s` of a polyline, reprojected onto M.
fn interpolate_polyline(
    path: &[Vec<f64>],
    s: f64,
    project: impl Fn(&[f64]) -> Option<Vec<f64>>,
) -> Vec<f64> {
    let seg: Vec<f64> = path.windows(2).map(|w| linalg::dist(&w[0], &w[1])).collect();
    let total: f64 = seg.iter().sum();
    if total == 0.0 {
        return path[0].clone();
    }
    let mut target = s * total;
    for (i, &l) in seg.iter().enumerate() {
        if target <= l || i + 1 == seg.len() {
            let r = if l > 0.0 { (target / l).clamp(0.0, 1.0) } else { 0.0 };
            let x: Vec<f64> = path[i]
                .iter()
                .zip(&path[i + 1])
                .map(|(a, b)| a + r * (b - a))
                .collect();
            return project(&x).unwrap_or(x);
        }
        target -= l;
    }
    path[path.len() - 1].clone()
}

/// C^1 reparametrization of [0,1] onto itself with vanishing end slopes.
#[inline]
fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// A sampled element of G(a,b).
#[derive(Debug, Clone)]
pub struct GeodesicCurve {
    a: ManifoldPoint,
    b: ManifoldPoint,
    length: f64,
    /// Constant-speed geodesic from `b` to `a`, uniformly sampled.
    nodes: Vec<Vec<f64>>,
    manifold: ManifoldHandle,
}

impl GeodesicCurve {
    fn new(m: &ManifoldHandle, a: &ManifoldPoint, b: &ManifoldPoint, count: usize) -> Self {
        let count = count.max(3);
        let nodes = match &m.kind {
            ManifoldKind::Sampled(surf) => surf.geodesic_path(b.coords(), a.coords(), count).0,
            _ => (0..count)
                .map(|k| m.geodesic_point(b.coords(), a.coords(), k as f64 / (count - 1) as f64))
                .collect(),
        };
        Self {
            a: a.clone(),
            b: b.clone(),
            length: m.geodesic_distance(a, b),
            nodes,
            manifold: m.clone(),
        }
    }

    pub fn a(&self) -> &ManifoldPoint {
        &self.a
    }

    pub fn b(&self) -> &ManifoldPoint {
        &self.b
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    /// γ(t). Exact endpoints outside [−1/2, 1/2].
    pub fn sample(&self, t: f64) -> Vec<f64> {
        if t >= 0.5 {
            return self.a.coords().to_vec();
        }
        if t <= -0.5 {
            return self.b.coords().to_vec();
        }
        let s = smoothstep(t + 0.5);
        if self.manifold.is_round() {
            return sphere_geodesic_point(self.b.coords(), self.a.coords(), s);
        }
        // Catmull–Rom through the stored nodes, then back onto M.
        let n = self.nodes.len() - 1;
        let x = s * n as f64;
        let i = (x.floor() as usize).min(n - 1);
        let r = x - i as f64;
        let p0 = &self.nodes[i.saturating_sub(1)];
        let p1 = &self.nodes[i];
        let p2 = &self.nodes[i + 1];
        let p3 = &self.nodes[(i + 2).min(n)];
        let (r2, r3) = (r * r, r * r * r);
        let v: Vec<f64> = (0..p1.len())
            .map(|k| {
                0.5 * (2.0 * p1[k]
                    + (p2[k] - p0[k]) * r
                    + (2.0 * p0[k] - 5.0 * p1[k] + 4.0 * p2[k] - p3[k]) * r2
                    + (3.0 * p1[k] - p0[k] - 3.0 * p2[k] + p3[k]) * r3)
            })
            .collect();
        self.manifold.nearest_point(&v).unwrap_or(v)
    }

    /// Discrete total variation Σ|γ(t_{k+1}) − γ(t_k)| on `count` uniform
    /// parameters in [−1/2, 1/2].
    pub fn discrete_variation(&self, count: usize) -> f64 {
        let count = count.max(2);
        let pts: Vec<Vec<f64>> = (0..count)
            .map(|k| self.sample(-0.5 + k as f64 / (count - 1) as f64))
            .collect();
        pts.windows(2).map(|w| linalg::dist(&w[0], &w[1])).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(m: &ManifoldHandle, c: &[f64]) -> ManifoldPoint {
        m.point(c).unwrap()
    }

    #[test]
    fn radial_projection_examples() {
        let c = ManifoldHandle::circle();
        assert_eq!(c.project(&[2.0, 0.0]).unwrap().coords(), &[1.0, 0.0]);
        assert_eq!(c.project(&[0.0, 0.0]).unwrap_err(), Error::OutOfTube { distance: 1.0, tube_radius: 0.5 });
        assert_eq!(c.project(&[1.0, 0.0]).unwrap().coords(), &[1.0, 0.0]);
        let s2 = ManifoldHandle::sphere(3).unwrap();
        assert_eq!(s2.project(&[0.0, 0.0, 0.5]).unwrap().coords(), &[0.0, 0.0, 1.0]);
        assert!(matches!(s2.project(&[0.0, 0.0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn nearest_point_has_no_tube_limit() {
        let c = ManifoldHandle::circle();
        assert_eq!(c.nearest_point(&[2.0, 0.0]).unwrap(), vec![1.0, 0.0]);
        assert!(c.nearest_point(&[0.0, 0.0]).is_none());
    }

    #[test]
    fn tangent_projection_examples() {
        let m = ManifoldHandle::sphere(3).unwrap();
        let s = pt(&m, &[0.0, 0.6, 0.8]);
        let xi = Matrix::from_columns(&[vec![1.0, 1.0, 1.0], s.coords().to_vec()]);
        let t = m.tangent_project(&s, &xi);
        let v = t.matrix().column(0);
        let dot = 0.6 + 0.8;
        for k in 0..3 {
            assert!((v[k] - (1.0 - dot * s.coords()[k])).abs() < 1e-15);
        }
        assert!(t.matrix().column(1).iter().all(|x| x.abs() < 1e-15));
        let again = m.tangent_project(&s, t.matrix());
        assert!(linalg::dist(again.matrix().as_slice(), t.matrix().as_slice()) < 1e-15);
    }

    #[test]
    fn geodesic_distance_examples() {
        let c = ManifoldHandle::circle();
        let d = c.geodesic_distance(&pt(&c, &[1.0, 0.0]), &pt(&c, &[0.0, 1.0]));
        assert!((d - PI / 2.0).abs() < 1e-15);
        let m = ManifoldHandle::sphere(3).unwrap();
        let n = pt(&m, &[0.0, 0.0, 1.0]);
        let s = pt(&m, &[0.0, 0.0, -1.0]);
        assert!((m.geodesic_distance(&n, &s) - PI).abs() < 1e-15);
        assert_eq!(m.geodesic_distance(&n, &n), 0.0);
    }

    #[test]
    fn profiles_have_geodesic_length_and_exact_ends() {
        let m = ManifoldHandle::sphere(3).unwrap();
        let a = pt(&m, &[1.0, 0.0, 0.0]);
        let b = pt(&m, &[-1.0, 0.0, 0.0]);
        let g = m.geodesic_profile(&a, &b);
        assert_eq!(g.sample(0.5), a.coords());
        assert_eq!(g.sample(-0.5), b.coords());
        assert_eq!(g.sample(3.0), a.coords());
        assert!((g.length() - PI).abs() < 1e-12);
        let tv = g.discrete_variation(4001);
        assert!((tv - PI).abs() / PI < 1e-5, "{tv}");
        // antipodal tie-break goes through the plane of a and e_2
        let mid = g.sample(0.0);
        assert!(mid[2].abs() < 1e-12 && (mid[1].abs() - 1.0).abs() < 1e-12);

        let c = ManifoldHandle::circle();
        let p = pt(&c, &[0.0, 1.0]);
        let flat = c.geodesic_profile(&p, &p);
        assert_eq!(flat.length(), 0.0);
        assert!(flat.discrete_variation(100) < 1e-15);
        let q = c.geodesic_profile(&pt(&c, &[1.0, 0.0]), &p);
        assert!((q.length() - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn profile_variation_converges_at_least_linearly() {
        let c = ManifoldHandle::circle();
        let a = pt(&c, &[1.0, 0.0]);
        let b = pt(&c, &[(2.5f64).cos(), (2.5f64).sin()]);
        let g = c.geodesic_profile(&a, &b);
        let e1 = (g.length() - g.discrete_variation(33)).abs();
        let e2 = (g.length() - g.discrete_variation(65)).abs();
        assert!(e2 <= 0.55 * e1, "{e1} {e2}");
    }

    #[test]
    fn tangent_basis_is_orthonormal_and_tangent() {
        let m = ManifoldHandle::sphere(4).unwrap();
        let s = linalg::normalized(&[0.3, -0.2, 0.9, 0.1]).unwrap();
        let basis = m.tangent_basis(&s);
        assert_eq!(basis.len(), 3);
        for (i, u) in basis.iter().enumerate() {
            assert!(linalg::dot(u, &s).abs() < 1e-14);
            for (j, v) in basis.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((linalg::dot(u, v) - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn chord_arc_matches_geodesic_and_derivative() {
        let c = ManifoldHandle::circle();
        for &chord in &[1e-4, 5e-4, 0.01, 0.5, 1.3, 1.99] {
            let (rho, drho) = c.chord_arc(chord);
            assert!((rho * chord - 2.0 * (chord / 2.0).asin()).abs() < 1e-14);
            let h = 1e-7;
            let fd = (c.chord_arc(chord + h).0 - c.chord_arc(chord - h).0) / (2.0 * h);
            assert!((fd - drho).abs() < 1e-5, "{chord}: {fd} vs {drho}");
        }
    }

    #[test]
    fn metric_equivalence_constant_is_finite() {
        use rand::Rng;
        let m = ManifoldHandle::sphere(3).unwrap();
        let mut rng = crate::rng::SeedStream::new(11).rng(0);
        let mut worst: f64 = 0.0;
        for _ in 0..10_000 {
            let a: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (Some(a), Some(b)) = (linalg::normalized(&a), linalg::normalized(&b)) else {
                continue;
            };
            let e = linalg::dist(&a, &b);
            let g = m.geodesic_distance_raw(&a, &b);
            assert!(g + 1e-14 >= e);
            if e > 0.0 {
                worst = worst.max(g / e);
            }
        }
        assert!(worst <= PI / 2.0 + 1e-9 && worst > 1.0);
    }

    fn sphere_point(d: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-1.0f64..1.0, d)
            .prop_filter_map("nonzero", |v| linalg::normalized(&v))
    }

    proptest! {
        #[test]
        fn projection_is_idempotent(v in proptest::collection::vec(-1.0f64..1.0, 3), r in 0.6f64..1.45) {
            let m = ManifoldHandle::sphere(3).unwrap();
            if let Some(u) = linalg::normalized(&v) {
                let p: Vec<f64> = u.iter().map(|x| r * x).collect();
                let once = m.project(&p).unwrap();
                let twice = m.project(once.coords()).unwrap();
                prop_assert!((linalg::norm(once.coords()) - 1.0).abs() <= 1e-12);
                prop_assert!(linalg::dist(once.coords(), twice.coords()) <= 1e-12);
            }
        }

        #[test]
        fn tangent_projector_is_symmetric_and_idempotent(
            s in sphere_point(3),
            v in proptest::collection::vec(-2.0f64..2.0, 3),
            w in proptest::collection::vec(-2.0f64..2.0, 3),
        ) {
            let m = ManifoldHandle::sphere(3).unwrap();
            let mut pv = v.clone();
            m.tangent_project_vec(&s, &mut pv);
            let mut pw = w.clone();
            m.tangent_project_vec(&s, &mut pw);
            prop_assert!((linalg::dot(&pv, &w) - linalg::dot(&v, &pw)).abs() <= 1e-12);
            let mut ppv = pv.clone();
            m.tangent_project_vec(&s, &mut ppv);
            prop_assert!(linalg::dist(&ppv, &pv) <= 1e-12);
        }

        #[test]
        fn geodesic_distance_is_a_metric(a in sphere_point(3), b in sphere_point(3), c in sphere_point(3)) {
            let m = ManifoldHandle::sphere(3).unwrap();
            let dab = m.geodesic_distance_raw(&a, &b);
            prop_assert!((dab - m.geodesic_distance_raw(&b, &a)).abs() <= 1e-15);
            prop_assert!(dab <= m.geodesic_distance_raw(&a, &c) + m.geodesic_distance_raw(&c, &b) + 1e-12);
            prop_assert!(dab + 1e-15 >= linalg::dist(&a, &b));
        }

        #[test]
        fn geodesic_points_stay_on_sphere(a in sphere_point(3), b in sphere_point(3), s in 0.0f64..1.0) {
            let m = ManifoldHandle::sphere(3).unwrap();
            let p = m.geodesic_point(&a, &b, s);
            prop_assert!((linalg::norm(&p) - 1.0).abs() <= 1e-12);
            let total = m.geodesic_distance_raw(&a, &b);
            prop_assert!((m.geodesic_distance_raw(&a, &p) - s * total).abs() <= 1e-7);
        }
    }
}
