//! Sampling-based estimates of the growth, Lipschitz and recession constants.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::integrand::Integrand;
use crate::linalg;
use crate::rng::SeedStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub seed: u64,
    /// Number of (y, ξ) samples for each estimate; at least 1000.
    pub samples: usize,
    /// Largest |ξ| used for the growth and Lipschitz estimates.
    pub max_norm: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            samples: 2000,
            max_norm: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub lip_hat: f64,
    pub recession_c: f64,
    pub recession_q: f64,
    pub samples: usize,
    pub recession_samples: usize,
    pub periodic_pass: bool,
    pub growth_pass: bool,
    pub lipschitz_pass: bool,
    pub recession_pass: bool,
}

impl HypothesisReport {
    pub fn all_pass(&self) -> bool {
        self.periodic_pass && self.growth_pass && self.lipschitz_pass && self.recession_pass
    }
}

fn random_direction(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if let Some(u) = linalg::normalized(&v) {
            return u;
        }
    }
}

fn random_y(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen::<f64>()).collect()
}

/// Estimates the constants of periodicity, linear growth, Lipschitz
/// continuity in ξ and the recession rate |f − f^∞| ≤ C(1 + |ξ|^{1−q}).
pub fn certify(f: &Integrand, config: &SamplerConfig) -> HypothesisReport {
    let samples = config.samples.max(1000);
    let n = f.space_dim();
    let len = f.space_dim() * f.target_dim();
    let stream = SeedStream::new(config.seed);

    let mut rng = stream.rng(0);
    let mut periodic_pass = true;
    for _ in 0..samples {
        let y = random_y(&mut rng, n);
        let xi: Vec<f64> = random_direction(&mut rng, len)
            .into_iter()
            .map(|x| x * rng.gen_range(0.0..config.max_norm))
            .collect();
        let i = rng.gen_range(0..n);
        let mut y2 = y.clone();
        y2[i] += 1.0;
        let (a, b) = (f.eval(&y, &xi), f.eval(&y2, &xi));
        if (a - b).abs() > 1e-9 * (1.0 + a.abs()) {
            periodic_pass = false;
        }
    }

    let mut rng = stream.rng(1);
    let mut alpha_hat = f64::INFINITY;
    let mut beta_hat: f64 = 0.0;
    for _ in 0..samples {
        let y = random_y(&mut rng, n);
        let dir = random_direction(&mut rng, len);
        let r = rng.gen_range(0.0..config.max_norm);
        let xi: Vec<f64> = dir.iter().map(|x| x * r).collect();
        let v = f.eval(&y, &xi);
        if r >= 1.0 {
            alpha_hat = alpha_hat.min(v / r);
        }
        beta_hat = beta_hat.max(v / (1.0 + r));
    }
    // Coercivity at large |ξ| where the bound is hardest for offsets to hide.
    for _ in 0..samples / 4 {
        let y = random_y(&mut rng, n);
        let dir = random_direction(&mut rng, len);
        let r = config.max_norm * 100.0;
        let xi: Vec<f64> = dir.iter().map(|x| x * r).collect();
        let v = f.eval(&y, &xi);
        alpha_hat = alpha_hat.min(v / r);
        beta_hat = beta_hat.max(v / (1.0 + r));
    }

    let mut rng = stream.rng(2);
    let mut lip_hat: f64 = 0.0;
    for k in 0..samples {
        let y = random_y(&mut rng, n);
        let dir = random_direction(&mut rng, len);
        let r = rng.gen_range(0.0..config.max_norm);
        let xi: Vec<f64> = dir.iter().map(|x| x * r).collect();
        let step = if k % 2 == 0 {
            rng.gen_range(0.0..config.max_norm)
        } else {
            rng.gen_range(1e-6..1e-2)
        };
        let other: Vec<f64> = random_direction(&mut rng, len)
            .into_iter()
            .zip(&xi)
            .map(|(u, x)| x + step * u)
            .collect();
        let d = linalg::dist(&xi, &other);
        if d > 0.0 {
            lip_hat = lip_hat.max((f.eval(&y, &xi) - f.eval(&y, &other)).abs() / d);
        }
    }

    let mut rng = stream.rng(3);
    let (log_r, gaps) = recession_samples(f, &mut rng, samples);
    let (recession_q, recession_c, fit_ok) = fit_recession(&log_r, &gaps);

    let growth_pass = alpha_hat > 1e-8 && beta_hat.is_finite();
    let lipschitz_pass = lip_hat.is_finite();
    let recession_pass = fit_ok && recession_q > 0.0 && recession_q < 1.0;
    HypothesisReport {
        alpha_hat,
        beta_hat,
        lip_hat,
        recession_c,
        recession_q,
        samples,
        recession_samples: gaps.len(),
        periodic_pass,
        growth_pass,
        lipschitz_pass,
        recession_pass,
    }
}

/// Returns (|ξ|, |f − f^∞|) for |ξ| log-uniform in [10, 10^4].
fn recession_samples(f: &Integrand, rng: &mut impl Rng, samples: usize) -> (Vec<f64>, Vec<f64>) {
    let n = f.space_dim();
    let len = f.space_dim() * f.target_dim();
    let mut radii = Vec::with_capacity(samples);
    let mut gaps = Vec::with_capacity(samples);
    for _ in 0..samples {
        let y = random_y(rng, n);
        let r = 10f64.powf(rng.gen_range(1.0..4.0));
        let xi: Vec<f64> = random_direction(rng, len).iter().map(|x| x * r).collect();
        radii.push(r);
        gaps.push((f.eval(&y, &xi) - f.eval_recession(&y, &xi)).abs());
    }
    (radii, gaps)
}

/// Least-squares slope of log(gap/(1+r)) on log(1+r); q = −slope clamped to
/// [0.05, 0.95], C the smallest constant with gap ≤ C(1 + r^{1−q}).
fn fit_recession(radii: &[f64], gaps: &[f64]) -> (f64, f64, bool) {
    let pts: Vec<(f64, f64)> = radii
        .iter()
        .zip(gaps)
        .filter(|(_, g)| **g > 1e-12)
        .map(|(r, g)| ((1.0 + r).ln(), (g / (1.0 + r)).ln()))
        .collect();
    if pts.len() < radii.len() / 2 {
        // f and f^∞ agree on the samples: any q works with C = 0.
        return (0.5, gaps.iter().cloned().fold(0.0, f64::max) / 2.0, true);
    }
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let (mx, my) = (sx / m, sy / m);
    let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |(a, b), p| {
        (a + (p.0 - mx) * (p.1 - my), b + (p.0 - mx) * (p.0 - mx))
    });
    let slope = sxy / sxx;
    let q = (-slope).clamp(0.05, 0.95);
    let c = radii
        .iter()
        .zip(gaps)
        .map(|(r, g)| g / (1.0 + r.powf(1.0 - q)))
        .fold(0.0, f64::max);
    // A gap growing like |ξ| leaves no room for any q < 1.
    (q, c, slope < -0.01)
}

/// Verifies |F(ξ) − F^∞(ξ)| ≤ C₂(1 + |ξ|^{1−q}) for sampled estimates: the
/// constant is fitted on even-indexed samples with a safety factor 2 and
/// checked on the odd-indexed ones.
pub fn check_gap_bound(radii: &[f64], gaps: &[f64]) -> GapBoundCheck {
    let even: (Vec<f64>, Vec<f64>) = radii
        .iter()
        .zip(gaps)
        .step_by(2)
        .map(|(r, g)| (*r, *g))
        .unzip();
    let (q, c, _) = fit_recession(&even.0, &even.1);
    let c2 = 2.0 * c;
    let violations = radii
        .iter()
        .zip(gaps)
        .skip(1)
        .step_by(2)
        .filter(|(r, g)| **g > c2 * (1.0 + r.powf(1.0 - q)) + 1e-9)
        .count();
    GapBoundCheck {
        q,
        c2,
        violations,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapBoundCheck {
    pub q: f64,
    pub c2: f64,
    pub violations: usize,
}
