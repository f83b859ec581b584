//! Pointwise densities as seen by the grid solvers.
//!
//! A [`DensityField`] freezes its y-dependence once per quadrature point
//! into a [`PointDensity`], which is then evaluated at many slopes.

/// A density ξ ↦ F(ξ) on R^{d×N} (column-major slices).
pub trait PointDensity: Send + Sync {
    fn value(&self, xi: &[f64]) -> f64;

    /// Huber-smoothed value with parameter `mu`; writes the gradient in ξ.
    fn smoothed(&self, xi: &[f64], mu: f64, grad: &mut [f64]) -> f64;
}

/// A y-dependent density.
pub trait DensityField: Sync {
    type Local: PointDensity;

    fn local(&self, y: &[f64]) -> Self::Local;
}

/// Huber regularization of r ↦ r (r ≥ 0): value and derivative.
#[inline]
pub fn huber(r: f64, mu: f64) -> (f64, f64) {
    if r <= mu {
        (0.5 * r * r / mu, r / mu)
    } else {
        (r - 0.5 * mu, 1.0)
    }
}

/// Huber-smoothed Euclidean norm of `v`, accumulating `weight * ∇` into `grad`.
#[inline]
pub fn huber_norm_acc(v: &[f64], mu: f64, weight: f64, grad: &mut [f64]) -> f64 {
    let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (h, dh) = huber(r, mu);
    if r > 0.0 {
        let c = weight * dh / r;
        for (g, x) in grad.iter_mut().zip(v) {
            *g += c * x;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn huber_is_c1_and_close_to_abs() {
        let mu = 1e-2;
        let (a, da) = huber(mu - 1e-12, mu);
        let (b, db) = huber(mu + 1e-12, mu);
        assert!((a - b).abs() < 1e-10 && (da - db).abs() < 1e-9);
        for &r in &[0.0, 0.003, 0.5, 7.0] {
            let (h, _) = huber(r, mu);
            assert!(h <= r && r - h <= 0.5 * mu + 1e-15);
        }
    }
}
