//! Periodic linear-growth integrands f(y, ξ), their recession functions and
//! the tangential extension g(y, s, ξ).

mod certify;
mod coeff;
mod extend;

use std::sync::Arc;

use crate::density::{huber, huber_norm_acc, DensityField, PointDensity};
use crate::error::{Error, Result};
use crate::linalg;

pub use certify::{certify, check_gap_bound, GapBoundCheck, HypothesisReport, SamplerConfig};
pub use coeff::{Coefficient, LatticeTable, TABLE_MAGIC};
pub use extend::{ExtendedField, ExtendedIntegrand, ExtendedLocal};

/// Strictly increasing list of scales t used to estimate limsup f(y,tξ)/t.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule(Vec<f64>);

impl Schedule {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidSchedule("empty schedule".into()));
        }
        if values.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return Err(Error::InvalidSchedule("scales must be positive and finite".into()));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSchedule("scales must be strictly increasing".into()));
        }
        Ok(Self(values))
    }

    /// `start, start*ratio, …` with `count` entries.
    pub fn geometric(start: f64, ratio: f64, count: usize) -> Result<Self> {
        Self::new((0..count).map(|k| start * ratio.powi(k as i32)).collect())
    }

    /// {2^4, …, 2^14}.
    pub fn default_recession() -> Self {
        Self::geometric(16.0, 2.0, 11).expect("valid")
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn last(&self) -> f64 {
        *self.0.last().expect("non-empty")
    }

    /// Last (up to) `k` entries.
    pub fn tail(&self, k: usize) -> &[f64] {
        &self.0[self.0.len().saturating_sub(k)..]
    }
}

/// Piecewise-linear radial profile r ↦ h(r) through knots starting at
/// (0, 0), extended linearly past the last knot.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    knots: Vec<(f64, f64)>,
}

impl RadialProfile {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 || knots[0] != (0.0, 0.0) {
            return Err(Error::InvalidInput(
                "profile needs at least two knots, the first at (0, 0)".into(),
            ));
        }
        if knots.windows(2).any(|w| w[1].0 <= w[0].0) || knots.iter().any(|k| k.1 < 0.0) {
            return Err(Error::InvalidInput(
                "profile radii must increase and values be nonnegative".into(),
            ));
        }
        Ok(Self { knots })
    }

    fn segment(&self, r: f64) -> usize {
        match self.knots.iter().position(|k| k.0 > r) {
            Some(0) => 0,
            Some(i) => i - 1,
            None => self.knots.len() - 2,
        }
    }

    /// h(r) and h'(r).
    pub fn eval(&self, r: f64) -> (f64, f64) {
        let i = self.segment(r);
        let (r0, h0) = self.knots[i];
        let (r1, h1) = self.knots[i + 1];
        let slope = (h1 - h0) / (r1 - r0);
        (h0 + slope * (r - r0), slope)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// a(y)|ξ|
    WeightedNorm { a: Coefficient },
    /// a(y)|ξ| + b(y) Σ_i |ξ_i · e|
    Anisotropic {
        a: Coefficient,
        b: Coefficient,
        direction: Arc<Vec<f64>>,
    },
    /// a(y)(|ξ| + κ|ξ|²/(1+|ξ|²)); nonconvex in ξ for κ > 0.
    SmoothedNonconvex { a: Coefficient, bump: f64 },
    /// a(y) h(|ξ|) with a user-tabulated profile h.
    Tabulated {
        a: Coefficient,
        profile: Arc<RadialProfile>,
    },
}

/// A Carathéodory integrand f: R^N × R^{d×N} → [0, ∞), 1-periodic in y.
#[derive(Debug, Clone, PartialEq)]
pub struct Integrand {
    family: Family,
    offset: f64,
    space_dim: usize,
    target_dim: usize,
    /// limsup h(t)/t for tabulated profiles, from the default schedule.
    profile_slope: f64,
}

impl Integrand {
    pub fn new(family: Family, space_dim: usize, target_dim: usize) -> Result<Self> {
        if space_dim == 0 || target_dim == 0 {
            return Err(Error::Dimension("dimensions must be positive".into()));
        }
        if let Family::Anisotropic { direction, .. } = &family {
            if direction.len() != target_dim {
                return Err(Error::Dimension(format!(
                    "anisotropy direction has length {}, expected {target_dim}",
                    direction.len()
                )));
            }
        }
        let profile_slope = match &family {
            Family::Tabulated { profile, .. } => Schedule::default_recession()
                .tail(3)
                .iter()
                .map(|&t| profile.eval(t).0 / t)
                .fold(f64::NEG_INFINITY, f64::max),
            _ => 1.0,
        };
        Ok(Self {
            family,
            offset: 0.0,
            space_dim,
            target_dim,
            profile_slope,
        })
    }

    /// `a(y)|ξ|`
    pub fn weighted_norm(a: Coefficient, space_dim: usize, target_dim: usize) -> Self {
        Self::new(Family::WeightedNorm { a }, space_dim, target_dim).expect("valid dims")
    }

    /// `|ξ|`
    pub fn isotropic(space_dim: usize, target_dim: usize) -> Self {
        Self::weighted_norm(Coefficient::Constant(1.0), space_dim, target_dim)
    }

    /// Adds a constant to f; it vanishes in the recession function.
    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn space_dim(&self) -> usize {
        self.space_dim
    }

    pub fn target_dim(&self) -> usize {
        self.target_dim
    }

    pub fn family_name(&self) -> &'static str {
        match self.family {
            Family::WeightedNorm { .. } => "weighted-norm",
            Family::Anisotropic { .. } => "anisotropic",
            Family::SmoothedNonconvex { .. } => "smoothed-nonconvex",
            Family::Tabulated { .. } => "tabulated",
        }
    }

    /// True when f^∞ is known in closed form.
    pub fn closed_form_recession(&self) -> bool {
        !matches!(self.family, Family::Tabulated { .. })
    }

    /// Whether f is positively 1-homogeneous in ξ (then f^∞ = f).
    pub fn is_one_homogeneous(&self) -> bool {
        self.offset == 0.0
            && matches!(
                self.family,
                Family::WeightedNorm { .. } | Family::Anisotropic { .. }
            )
    }

    /// Frozen density at `y`.
    pub fn local(&self, y: &[f64], recession: bool) -> FrozenIntegrand {
        let (a, b, shape) = match &self.family {
            Family::WeightedNorm { a } => (a.eval(y), 0.0, Shape::Norm),
            Family::Anisotropic { a, b, direction } => {
                (a.eval(y), b.eval(y), Shape::Anisotropic(direction.clone()))
            }
            Family::SmoothedNonconvex { a, bump } => (a.eval(y), 0.0, Shape::Nonconvex(*bump)),
            Family::Tabulated { a, profile } => (
                a.eval(y),
                0.0,
                Shape::Tabulated(profile.clone(), self.profile_slope),
            ),
        };
        FrozenIntegrand {
            a,
            b,
            offset: if recession { 0.0 } else { self.offset },
            shape,
            recession,
            rows: self.target_dim,
        }
    }

    /// f(y, ξ).
    pub fn eval(&self, y: &[f64], xi: &[f64]) -> f64 {
        self.local(y, false).value(xi)
    }

    /// Closed-form f^∞(y, ξ) for the builtin families. Tabulated profiles use
    /// the slope limit estimated on the default schedule.
    pub fn eval_recession(&self, y: &[f64], xi: &[f64]) -> f64 {
        self.local(y, true).value(xi)
    }

    /// f^∞(y, ξ) = limsup_t f(y, tξ)/t along `schedule`.
    ///
    /// Builtin families return the closed form; tabulated ones return the
    /// maximum of f(y, tξ)/t over the last three scales.
    pub fn recession(&self, y: &[f64], xi: &[f64], schedule: &Schedule) -> Result<f64> {
        if schedule.last() < 1024.0 {
            return Err(Error::ScheduleTooShort {
                last: schedule.last(),
            });
        }
        if self.closed_form_recession() {
            return Ok(self.eval_recession(y, xi));
        }
        let local = self.local(y, false);
        let mut scaled = vec![0.0; xi.len()];
        Ok(schedule
            .tail(3)
            .iter()
            .map(|&t| {
                for (s, x) in scaled.iter_mut().zip(xi) {
                    *s = t * x;
                }
                local.value(&scaled) / t
            })
            .fold(f64::NEG_INFINITY, f64::max))
    }

    /// f as a y-dependent density for the grid solvers.
    pub fn field(&self) -> IntegrandField<'_> {
        IntegrandField {
            integrand: self,
            recession: false,
        }
    }

    /// f^∞ as a y-dependent density.
    pub fn recession_field(&self) -> IntegrandField<'_> {
        IntegrandField {
            integrand: self,
            recession: true,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IntegrandField<'a> {
    integrand: &'a Integrand,
    recession: bool,
}

impl DensityField for IntegrandField<'_> {
    type Local = FrozenIntegrand;

    fn local(&self, y: &[f64]) -> FrozenIntegrand {
        self.integrand.local(y, self.recession)
    }
}

#[derive(Debug, Clone)]
enum Shape {
    Norm,
    Anisotropic(Arc<Vec<f64>>),
    Nonconvex(f64),
    Tabulated(Arc<RadialProfile>, f64),
}

/// f(y, ·) or f^∞(y, ·) with the coefficients evaluated at a fixed y.
#[derive(Debug, Clone)]
pub struct FrozenIntegrand {
    a: f64,
    b: f64,
    offset: f64,
    shape: Shape,
    recession: bool,
    rows: usize,
}

impl PointDensity for FrozenIntegrand {
    fn value(&self, xi: &[f64]) -> f64 {
        let r = linalg::norm(xi);
        let core = match &self.shape {
            Shape::Norm => self.a * r,
            Shape::Anisotropic(e) => {
                let s: f64 = xi.chunks(self.rows).map(|c| linalg::dot(c, e).abs()).sum();
                self.a * r + self.b * s
            }
            Shape::Nonconvex(bump) => {
                if self.recession {
                    self.a * r
                } else {
                    self.a * (r + bump * r * r / (1.0 + r * r))
                }
            }
            Shape::Tabulated(profile, slope) => {
                if self.recession {
                    self.a * slope * r
                } else {
                    self.a * profile.eval(r).0
                }
            }
        };
        core + self.offset
    }

    fn smoothed(&self, xi: &[f64], mu: f64, grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let core = match &self.shape {
            Shape::Norm => self.a * huber_norm_acc(xi, mu, self.a, grad),
            Shape::Anisotropic(e) => {
                let mut v = self.a * huber_norm_acc(xi, mu, self.a, grad);
                for (c, g) in xi.chunks(self.rows).zip(grad.chunks_mut(self.rows)) {
                    let z = linalg::dot(c, e);
                    let (h, dh) = huber(z.abs(), mu);
                    v += self.b * h;
                    linalg::axpy(self.b * dh * z.signum(), e, g);
                }
                v
            }
            Shape::Nonconvex(bump) => {
                let mut v = self.a * huber_norm_acc(xi, mu, self.a, grad);
                if !self.recession {
                    let r2 = linalg::dot(xi, xi);
                    let q = 1.0 + r2;
                    v += self.a * bump * r2 / q;
                    linalg::axpy(2.0 * self.a * bump / (q * q), xi, grad);
                }
                v
            }
            Shape::Tabulated(profile, slope) => {
                if self.recession {
                    self.a * slope * huber_norm_acc(xi, mu, self.a * slope, grad)
                } else {
                    let r = linalg::norm(xi);
                    let (hr, dhr) = huber(r, mu);
                    let (p, dp) = profile.eval(hr);
                    if r > 0.0 {
                        linalg::axpy(self.a * dp * dhr / r, xi, grad);
                    }
                    self.a * p
                }
            }
        };
        core + self.offset
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;
    use rand::Rng;

    fn weighted() -> Integrand {
        Integrand::weighted_norm(Coefficient::parse("sine:2,1,0").unwrap(), 1, 2)
    }

    fn random_matrix(rng: &mut impl Rng, len: usize, scale: f64) -> Vec<f64> {
        (0..len).map(|_| scale * rng.gen_range(-1.0..1.0)).collect()
    }

    fn all_families(n: usize, d: usize) -> Vec<Integrand> {
        let a = Coefficient::SineSum {
            mean: 2.0,
            amplitude: 1.0,
        };
        let mut dir = vec![0.0; d];
        dir[0] = 1.0;
        vec![
            Integrand::weighted_norm(a.clone(), n, d),
            Integrand::new(
                Family::Anisotropic {
                    a: a.clone(),
                    b: Coefficient::Constant(0.5),
                    direction: Arc::new(dir),
                },
                n,
                d,
            )
            .unwrap(),
            Integrand::new(Family::SmoothedNonconvex { a: a.clone(), bump: 0.8 }, n, d).unwrap(),
            Integrand::new(
                Family::Tabulated {
                    a,
                    profile: Arc::new(
                        RadialProfile::new(vec![(0.0, 0.0), (1.0, 0.5), (2.0, 2.0), (3.0, 3.5)])
                            .unwrap(),
                    ),
                },
                n,
                d,
            )
            .unwrap(),
        ]
    }

    #[test]
    fn eval_examples() {
        let f = weighted();
        assert_eq!(f.eval(&[0.3], &[0.0, 0.0]), 0.0);
        // a(0) = 2, |ξ| = 3
        assert!((f.eval(&[0.0], &[0.0, 3.0]) - 6.0).abs() < 1e-14);
    }

    #[test]
    fn periodicity_on_random_samples() {
        let mut rng = SeedStream::new(1).rng(0);
        for f in all_families(2, 3) {
            for _ in 0..1000 {
                let y = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
                let xi = random_matrix(&mut rng, 6, 3.0);
                let i = rng.gen_range(0..2);
                let mut shifted = y;
                shifted[i] += 1.0;
                let (v0, v1) = (f.eval(&y, &xi), f.eval(&shifted, &xi));
                assert!((v0 - v1).abs() <= 1e-12 * (1.0 + v0), "{}", f.family_name());
            }
        }
    }

    #[test]
    fn recession_examples() {
        let f = weighted();
        let sched = Schedule::default_recession();
        let y = [0.1];
        let xi = [0.3, -0.4];
        assert_eq!(f.recession(&y, &xi, &sched).unwrap(), f.eval(&y, &xi));
        let g = weighted().with_offset(0.7);
        assert!((g.recession(&y, &xi, &sched).unwrap() - f.eval(&y, &xi)).abs() < 1e-15);
        assert_eq!(g.recession(&y, &[0.0, 0.0], &sched).unwrap(), 0.0);
        let short = Schedule::geometric(1.0, 2.0, 10).unwrap();
        assert_eq!(
            f.recession(&y, &xi, &short),
            Err(Error::ScheduleTooShort { last: 512.0 })
        );
        assert!(Schedule::new(vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn tabulated_recession_uses_schedule_tail() {
        let f = &all_families(1, 2)[3];
        let sched = Schedule::default_recession();
        let xi = [0.6, 0.8];
        // h has slope 1.5 beyond r = 3: h(r) = 1.5 r - 1
        let want = 2.0 * (1.5 * 16384.0 - 1.0) / 16384.0;
        let got = f.recession(&[0.0], &xi, &sched).unwrap();
        assert!((got - want).abs() < 1e-12, "{got} {want}");
    }

    #[test]
    fn recession_is_one_homogeneous() {
        let mut rng = SeedStream::new(2).rng(0);
        let sched = Schedule::default_recession();
        for f in all_families(2, 2) {
            for _ in 0..200 {
                let y = [rng.gen::<f64>(), rng.gen::<f64>()];
                let xi = random_matrix(&mut rng, 4, 5.0);
                let lambda = rng.gen_range(1e-3..10.0);
                let scaled: Vec<f64> = xi.iter().map(|x| lambda * x).collect();
                let r1 = f.recession(&y, &scaled, &sched).unwrap();
                let r0 = f.recession(&y, &xi, &sched).unwrap();
                let tol = if f.closed_form_recession() { 1e-10 } else { 1e-3 };
                assert!((r1 - lambda * r0).abs() <= tol * (1.0 + r1), "{}", f.family_name());
            }
        }
    }

    #[test]
    fn smoothed_gradients_match_finite_differences() {
        let mut rng = SeedStream::new(3).rng(0);
        let mu = 1e-2;
        for f in all_families(2, 3) {
            for recession in [false, true] {
                for _ in 0..50 {
                    let y = [rng.gen::<f64>(), rng.gen::<f64>()];
                    let local = f.local(&y, recession);
                    let xi = random_matrix(&mut rng, 6, 2.0);
                    let mut g = vec![0.0; 6];
                    let v = local.smoothed(&xi, mu, &mut g);
                    assert!(v <= local.value(&xi) + 1e-12);
                    let mut scratch = vec![0.0; 6];
                    for k in 0..6 {
                        let h = 1e-6;
                        let mut p = xi.clone();
                        p[k] += h;
                        let mut m = xi.clone();
                        m[k] -= h;
                        let fd = (local.smoothed(&p, mu, &mut scratch)
                            - local.smoothed(&m, mu, &mut scratch))
                            / (2.0 * h);
                        assert!((fd - g[k]).abs() < 1e-4 * (1.0 + fd.abs()), "{} {k}: {fd} vs {}", f.family_name(), g[k]);
                    }
                }
            }
        }
    }

    #[test]
    fn growth_bounds_on_recession() {
        // α|ξ| ≤ f^∞ ≤ β|ξ| with α = 1, β = 3 for a = 2 + sin
        let f = weighted();
        let mut rng = SeedStream::new(4).rng(0);
        for _ in 0..1000 {
            let y = [rng.gen::<f64>()];
            let xi = random_matrix(&mut rng, 2, 10.0);
            let r = linalg::norm(&xi);
            let v = f.eval_recession(&y, &xi);
            assert!(v >= r - 1e-12 && v <= 3.0 * r + 1e-12);
        }
    }
}
