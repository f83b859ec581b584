use crate::density::{huber_norm_acc, DensityField, PointDensity};
use crate::integrand::{FrozenIntegrand, Integrand};
use crate::linalg;
use crate::manifold::ManifoldHandle;

/// g(y, s, ξ) = f(y, ℙ_s ξ) + |ξ − ℙ_s ξ| with ℙ_s = χ(s) P_{Π(s)}.
#[derive(Debug, Clone)]
pub struct ExtendedIntegrand {
    base: Integrand,
    manifold: ManifoldHandle,
    delta0: f64,
}

/// Quintic smoothstep: 0 at x ≤ 0, 1 at x ≥ 1, C² in between.
fn smoothstep5(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * x * (10.0 - 15.0 * x + 6.0 * x * x)
}

impl ExtendedIntegrand {
    pub fn new(base: Integrand, manifold: ManifoldHandle) -> crate::Result<Self> {
        if base.target_dim() != manifold.ambient_dim() {
            return Err(crate::Error::Dimension(format!(
                "integrand target dimension {} does not match manifold ambient dimension {}",
                base.target_dim(),
                manifold.ambient_dim()
            )));
        }
        let delta0 = manifold.tube_radius();
        Ok(Self {
            base,
            manifold,
            delta0,
        })
    }

    pub fn base(&self) -> &Integrand {
        &self.base
    }

    pub fn manifold(&self) -> &ManifoldHandle {
        &self.manifold
    }

    pub fn delta0(&self) -> f64 {
        self.delta0
    }

    /// Cutoff χ: 1 for dist ≤ δ0/2, 0 for dist ≥ 3δ0/4.
    pub fn cutoff(&self, s: &[f64]) -> f64 {
        let dist = self.manifold.distance_to(s);
        1.0 - smoothstep5((dist - 0.5 * self.delta0) / (0.25 * self.delta0))
    }

    /// ℙ_s as a row-major d×d symmetric matrix.
    pub fn projector(&self, s: &[f64]) -> Vec<f64> {
        let d = self.manifold.ambient_dim();
        let chi = self.cutoff(s);
        if chi == 0.0 {
            return vec![0.0; d * d];
        }
        let foot = self
            .manifold
            .nearest_point(s)
            .expect("points with χ > 0 lie inside the tube");
        let mut p = self.manifold.tangent_projector(&foot);
        linalg::scale(chi, &mut p);
        p
    }

    /// g(y, s, ξ).
    pub fn eval(&self, y: &[f64], s: &[f64], xi: &[f64]) -> f64 {
        self.at(s, false).local(y).value(xi)
    }

    /// g^∞(y, s, ξ) = f^∞(y, ℙ_s ξ) + |ξ − ℙ_s ξ|.
    pub fn eval_recession(&self, y: &[f64], s: &[f64], xi: &[f64]) -> f64 {
        self.at(s, true).local(y).value(xi)
    }

    /// g(·, s, ·) or g^∞(·, s, ·) at a frozen s.
    pub fn at(&self, s: &[f64], recession: bool) -> ExtendedField<'_> {
        ExtendedField {
            owner: self,
            projector: self.projector(s),
            recession,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExtendedField<'a> {
    owner: &'a ExtendedIntegrand,
    projector: Vec<f64>,
    recession: bool,
}

impl DensityField for ExtendedField<'_> {
    type Local = ExtendedLocal;

    fn local(&self, y: &[f64]) -> ExtendedLocal {
        ExtendedLocal {
            inner: self.owner.base.local(y, self.recession),
            projector: self.projector.clone(),
            d: self.owner.manifold.ambient_dim(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExtendedLocal {
    inner: FrozenIntegrand,
    projector: Vec<f64>,
    d: usize,
}

impl ExtendedLocal {
    /// (ℙξ, ξ − ℙξ), columnwise.
    fn split(&self, xi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.d;
        let mut tan = vec![0.0; xi.len()];
        for (col, out) in xi.chunks(d).zip(tan.chunks_mut(d)) {
            for i in 0..d {
                out[i] = linalg::dot(&self.projector[i * d..(i + 1) * d], col);
            }
        }
        let normal = xi.iter().zip(&tan).map(|(x, t)| x - t).collect();
        (tan, normal)
    }
}

impl PointDensity for ExtendedLocal {
    fn value(&self, xi: &[f64]) -> f64 {
        let (tan, normal) = self.split(xi);
        self.inner.value(&tan) + linalg::norm(&normal)
    }

    fn smoothed(&self, xi: &[f64], mu: f64, grad: &mut [f64]) -> f64 {
        let d = self.d;
        let (tan, normal) = self.split(xi);
        let mut g_tan = vec![0.0; xi.len()];
        let v = self.inner.smoothed(&tan, mu, &mut g_tan);
        let mut g_norm = vec![0.0; xi.len()];
        let h = huber_norm_acc(&normal, mu, 1.0, &mut g_norm);
        // ℙ is symmetric: ∇ = ℙ g_tan + (I − ℙ) g_norm
        for ((gc, tc), nc) in grad
            .chunks_mut(d)
            .zip(g_tan.chunks(d))
            .zip(g_norm.chunks(d))
        {
            for i in 0..d {
                let row = &self.projector[i * d..(i + 1) * d];
                gc[i] = linalg::dot(row, tc) + nc[i] - linalg::dot(row, nc);
            }
        }
        v + h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrand::{Coefficient, Family, RadialProfile, Schedule};
    use crate::rng::SeedStream;
    use rand::Rng;
    use std::sync::Arc;

    fn weighted(d: usize) -> Integrand {
        Integrand::weighted_norm(Coefficient::parse("sine:2,1,0").unwrap(), 2, d)
    }

    fn random_unit(rng: &mut impl Rng, d: usize) -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if let Some(u) = linalg::normalized(&v) {
                return u;
            }
        }
    }

    #[test]
    fn cutoff_profile() {
        let g = ExtendedIntegrand::new(weighted(2), ManifoldHandle::circle()).unwrap();
        assert_eq!(g.cutoff(&[1.2, 0.0]), 1.0);
        assert_eq!(g.cutoff(&[1.25, 0.0]), 1.0);
        assert_eq!(g.cutoff(&[1.375, 0.0]), 0.0);
        assert_eq!(g.cutoff(&[0.0, 0.0]), 0.0);
        let mid = g.cutoff(&[1.3125, 0.0]);
        assert!((mid - 0.5).abs() < 1e-12);
    }

    #[test]
    fn on_manifold_identity_for_tangent_slopes() {
        let m = ManifoldHandle::sphere(3).unwrap();
        let f = weighted(3);
        let g = ExtendedIntegrand::new(f.clone(), m.clone()).unwrap();
        let mut rng = SeedStream::new(11).rng(0);
        for _ in 0..500 {
            let s = random_unit(&mut rng, 3);
            let y = [rng.gen::<f64>(), rng.gen::<f64>()];
            let mut xi: Vec<f64> = (0..6).map(|_| rng.gen_range(-3.0..3.0)).collect();
            for col in xi.chunks_mut(3) {
                m.tangent_project_vec(&s, col);
            }
            let (gv, fv) = (g.eval(&y, &s, &xi), f.eval(&y, &xi));
            assert!((gv - fv).abs() <= 1e-12 * (1.0 + fv));
            let (gr, fr) = (g.eval_recession(&y, &s, &xi), f.eval_recession(&y, &xi));
            assert!((gr - fr).abs() <= 1e-12 * (1.0 + fr));
        }
    }

    #[test]
    fn normal_slopes_and_far_points() {
        let g = ExtendedIntegrand::new(weighted(2), ManifoldHandle::circle()).unwrap();
        // ξ = s ⊗ ν
        let s = [0.6, 0.8];
        let xi = [0.6 * 0.5, 0.8 * 0.5, 0.6 * -2.0, 0.8 * -2.0];
        let r = linalg::norm(&xi);
        assert!((g.eval(&[0.3, 0.0], &s, &xi) - r).abs() < 1e-12);
        let far = [0.3, 0.4];
        let xi2 = [1.0, 2.0, -0.5, 0.25];
        assert!((g.eval(&[0.1, 0.7], &far, &xi2) - linalg::norm(&xi2)).abs() < 1e-12);
    }

    #[test]
    fn growth_and_lipschitz_in_s() {
        let f = Integrand::new(
            Family::SmoothedNonconvex {
                a: Coefficient::parse("sinesum:2,1").unwrap(),
                bump: 0.5,
            },
            2,
            3,
        )
        .unwrap();
        let g = ExtendedIntegrand::new(f, ManifoldHandle::sphere(3).unwrap()).unwrap();
        let mut rng = SeedStream::new(12).rng(0);
        let mut worst_ratio: f64 = 0.0;
        for _ in 0..10_000 {
            let y = [rng.gen::<f64>(), rng.gen::<f64>()];
            let dir = random_unit(&mut rng, 3);
            let s: Vec<f64> = dir.iter().map(|x| x * rng.gen_range(0.3..1.8)).collect();
            let s2: Vec<f64> = s.iter().map(|x| x + rng.gen_range(-0.05..0.05)).collect();
            let xi: Vec<f64> = (0..6).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let r = linalg::norm(&xi);
            let v = g.eval(&y, &s, &xi);
            // α' = 1/√2 (norms of orthogonal pieces), β' = β + 1 with β = 3·1.5
            assert!(v >= r / 2f64.sqrt() - 1e-12 && v <= 5.5 * (1.0 + r));
            let ds = linalg::dist(&s, &s2);
            if ds > 1e-9 && r > 1e-9 {
                let q = (v - g.eval(&y, &s2, &xi)).abs() / (ds * r);
                worst_ratio = worst_ratio.max(q);
            }
        }
        assert!(worst_ratio.is_finite() && worst_ratio < 50.0, "{worst_ratio}");
    }

    #[test]
    fn recession_of_g_matches_tail_limit() {
        let f = Integrand::new(
            Family::Tabulated {
                a: Coefficient::Constant(1.5),
                profile: Arc::new(RadialProfile::new(vec![(0.0, 0.0), (1.0, 2.0), (2.0, 3.0)]).unwrap()),
            },
            1,
            2,
        )
        .unwrap()
        .with_offset(0.4);
        let g = ExtendedIntegrand::new(f, ManifoldHandle::circle()).unwrap();
        let s = [1.1, 0.2];
        let xi = [0.3, -0.7];
        let sched = Schedule::default_recession();
        let tail = sched
            .tail(3)
            .iter()
            .map(|&t| g.eval(&[0.2], &s, &[t * xi[0], t * xi[1]]) / t)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((tail - g.eval_recession(&[0.2], &s, &xi)).abs() < 1e-3);
    }

    #[test]
    fn smoothed_gradient_matches_finite_differences() {
        let g = ExtendedIntegrand::new(weighted(3), ManifoldHandle::sphere(3).unwrap()).unwrap();
        let mut rng = SeedStream::new(13).rng(0);
        for _ in 0..50 {
            let s: Vec<f64> = random_unit(&mut rng, 3).iter().map(|x| 1.3 * x).collect();
            let loc = g.at(&s, false).local(&[0.3, 0.9]);
            let xi: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mut gr = vec![0.0; 6];
            loc.smoothed(&xi, 1e-2, &mut gr);
            let mut tmp = vec![0.0; 6];
            for k in 0..6 {
                let (mut p, mut m) = (xi.clone(), xi.clone());
                p[k] += 1e-6;
                m[k] -= 1e-6;
                let fd = (loc.smoothed(&p, 1e-2, &mut tmp) - loc.smoothed(&m, 1e-2, &mut tmp)) / 2e-6;
                assert!((fd - gr[k]).abs() < 1e-4 * (1.0 + fd.abs()));
            }
        }
    }
}
