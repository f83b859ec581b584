use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use crate::error::{Error, Result};
use crate::linalg;

/// Hypersurface {φ = 0} described by a signed-distance-like field φ and its
/// gradient, both tabulated on a uniform lattice and interpolated
/// multilinearly.
#[derive(Debug, Clone)]
pub struct SampledSurface {
    origin: Vec<f64>,
    spacing: f64,
    counts: Vec<usize>,
    values: Vec<f64>,
    gradients: Vec<f64>,
}

impl SampledSurface {
    /// `values` has one entry per lattice node (first axis fastest),
    /// `gradients` has d entries per node.
    pub fn new(
        origin: Vec<f64>,
        spacing: f64,
        counts: Vec<usize>,
        values: Vec<f64>,
        gradients: Vec<f64>,
    ) -> Result<Self> {
        let d = origin.len();
        let total: usize = counts.iter().product();
        if counts.len() != d || counts.iter().any(|&c| c < 2) || !(spacing > 0.0) {
            return Err(Error::InvalidInput("bad lattice geometry".into()));
        }
        if values.len() != total || gradients.len() != total * d {
            return Err(Error::Dimension(format!(
                "lattice of {total} nodes needs {total} values and {} gradient entries",
                total * d
            )));
        }
        Ok(Self {
            origin,
            spacing,
            counts,
            values,
            gradients,
        })
    }

    /// Tabulates `field(x) -> (φ, ∇φ)` on the lattice.
    pub fn from_fn(
        origin: Vec<f64>,
        spacing: f64,
        counts: Vec<usize>,
        field: impl Fn(&[f64]) -> (f64, Vec<f64>),
    ) -> Result<Self> {
        let d = origin.len();
        let total: usize = counts.iter().product();
        let mut values = Vec::with_capacity(total);
        let mut gradients = Vec::with_capacity(total * d);
        let mut idx = vec![0usize; d];
        for _ in 0..total {
            let x: Vec<f64> = (0..d)
                .map(|k| origin[k] + spacing * idx[k] as f64)
                .collect();
            let (v, g) = field(&x);
            values.push(v);
            gradients.extend_from_slice(&g);
            for k in 0..d {
                idx[k] += 1;
                if idx[k] < counts[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        Self::new(origin, spacing, counts, values, gradients)
    }

    pub fn ambient_dim(&self) -> usize {
        self.origin.len()
    }

    fn node_index(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for k in (0..idx.len()).rev() {
            flat = flat * self.counts[k] + idx[k];
        }
        flat
    }

    /// Interpolated (φ, ∇φ) at `p`; points outside the lattice are clamped.
    fn interpolate(&self, p: &[f64]) -> (f64, Vec<f64>) {
        let d = self.ambient_dim();
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0; d];
        for k in 0..d {
            let x = ((p[k] - self.origin[k]) / self.spacing).clamp(0.0, (self.counts[k] - 1) as f64);
            let i = (x.floor() as usize).min(self.counts[k] - 2);
            base[k] = i;
            frac[k] = x - i as f64;
        }
        let mut value = 0.0;
        let mut grad = vec![0.0; d];
        let mut corner = vec![0usize; d];
        for mask in 0..(1usize << d) {
            let mut w = 1.0;
            for k in 0..d {
                let bit = (mask >> k) & 1;
                corner[k] = base[k] + bit;
                w *= if bit == 1 { frac[k] } else { 1.0 - frac[k] };
            }
            if w == 0.0 {
                continue;
            }
            let n = self.node_index(&corner);
            value += w * self.values[n];
            linalg::axpy(w, &self.gradients[n * d..(n + 1) * d], &mut grad);
        }
        (value, grad)
    }

    pub fn distance(&self, p: &[f64]) -> f64 {
        self.interpolate(p).0.abs()
    }

    pub fn normal(&self, p: &[f64]) -> Vec<f64> {
        let (_, g) = self.interpolate(p);
        linalg::normalized(&g).unwrap_or_else(|| {
            let mut e = vec![0.0; p.len()];
            e[0] = 1.0;
            e
        })
    }

    /// Damped Newton on φ along its gradient.
    pub fn project(&self, p: &[f64]) -> Option<Vec<f64>> {
        let mut x = p.to_vec();
        let (mut phi, mut grad) = self.interpolate(&x);
        for _ in 0..200 {
            if phi.abs() <= 1e-13 {
                return Some(x);
            }
            let g2 = linalg::dot(&grad, &grad);
            if g2 < 1e-24 {
                return None;
            }
            let mut damping = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let trial: Vec<f64> = x
                    .iter()
                    .zip(&grad)
                    .map(|(xi, gi)| xi - damping * phi * gi / g2)
                    .collect();
                let (tp, tg) = self.interpolate(&trial);
                if tp.abs() < phi.abs() {
                    x = trial;
                    phi = tp;
                    grad = tg;
                    accepted = true;
                    break;
                }
                damping *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        (phi.abs() <= 1e-12).then_some(x)
    }

    /// Approximate minimizing path from `a` to `b` with `count` points and
    /// its length: graph shortest path through projected lattice nodes,
    /// then curve shortening with fixed ends.
    pub fn geodesic_path(&self, a: &[f64], b: &[f64], count: usize) -> (Vec<Vec<f64>>, f64) {
        let count = count.max(3);
        if linalg::dist(a, b) < 1e-14 {
            return (vec![a.to_vec(); count], 0.0);
        }
        let seed = if linalg::dist(a, b) < 4.0 * self.spacing {
            vec![a.to_vec(), b.to_vec()]
        } else {
            self.graph_path(a, b)
                .unwrap_or_else(|| vec![a.to_vec(), b.to_vec()])
        };
        // coarse-to-fine curve shortening
        let mut k = 9.min(count);
        let mut path = self.resample(&seed, k);
        loop {
            self.shorten(&mut path, 40 * k);
            if k == count {
                break;
            }
            k = (2 * k - 1).min(count);
            path = self.resample(&path, k);
        }
        let length = path.windows(2).map(|w| linalg::dist(&w[0], &w[1])).sum();
        (path, length)
    }

    fn shorten(&self, path: &mut Vec<Vec<f64>>, sweeps: usize) {
        let count = path.len();
        for sweep in 0..sweeps {
            let mut moved: f64 = 0.0;
            for k in 1..count - 1 {
                let mid: Vec<f64> = path[k - 1]
                    .iter()
                    .zip(&path[k + 1])
                    .map(|(x, y)| 0.5 * (x + y))
                    .collect();
                if let Some(q) = self.project(&mid) {
                    moved = moved.max(linalg::dist(&q, &path[k]));
                    path[k] = q;
                }
            }
            if sweep % 25 == 24 {
                *path = self.resample(path, count);
            }
            if moved < 1e-12 {
                break;
            }
        }
    }

    fn resample(&self, path: &[Vec<f64>], count: usize) -> Vec<Vec<f64>> {
        let seg: Vec<f64> = path.windows(2).map(|w| linalg::dist(&w[0], &w[1])).collect();
        let total: f64 = seg.iter().sum();
        let mut out = Vec::with_capacity(count);
        out.push(path[0].clone());
        let mut i = 0;
        let mut acc = 0.0;
        for k in 1..count - 1 {
            let target = total * k as f64 / (count - 1) as f64;
            while i + 1 < seg.len() && acc + seg[i] < target {
                acc += seg[i];
                i += 1;
            }
            let r = if seg[i] > 0.0 { ((target - acc) / seg[i]).clamp(0.0, 1.0) } else { 0.0 };
            let x: Vec<f64> = path[i]
                .iter()
                .zip(&path[i + 1])
                .map(|(p, q)| p + r * (q - p))
                .collect();
            out.push(self.project(&x).unwrap_or(x));
        }
        out.push(path[path.len() - 1].clone());
        out
    }

    fn graph_path(&self, a: &[f64], b: &[f64]) -> Option<Vec<Vec<f64>>> {
        let d = self.ambient_dim();
        let band = self.spacing * (d as f64).sqrt();
        let mut pts: Vec<Vec<f64>> = vec![a.to_vec(), b.to_vec()];
        let total: usize = self.counts.iter().product();
        let mut idx = vec![0usize; d];
        for n in 0..total {
            if self.values[n].abs() < band {
                let x: Vec<f64> = (0..d)
                    .map(|k| self.origin[k] + self.spacing * idx[k] as f64)
                    .collect();
                if let Some(q) = self.project(&x) {
                    pts.push(q);
                }
            }
            for k in 0..d {
                idx[k] += 1;
                if idx[k] < self.counts[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        let radius = 2.0 * band;
        let key = |p: &[f64]| -> Vec<i64> { p.iter().map(|x| (x / radius).floor() as i64).collect() };
        let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (i, p) in pts.iter().enumerate() {
            buckets.entry(key(p)).or_default().push(i);
        }
        let neighbors = |i: usize| -> Vec<(usize, f64)> {
            let k = key(&pts[i]);
            let mut out = Vec::new();
            for mask in 0..3usize.pow(d as u32) {
                let mut m = mask;
                let cell: Vec<i64> = k
                    .iter()
                    .map(|c| {
                        let off = (m % 3) as i64 - 1;
                        m /= 3;
                        c + off
                    })
                    .collect();
                if let Some(list) = buckets.get(&cell) {
                    for &j in list {
                        let l = linalg::dist(&pts[i], &pts[j]);
                        if j != i && l <= radius {
                            out.push((j, l));
                        }
                    }
                }
            }
            out
        };

        #[derive(PartialEq)]
        struct Item(f64, usize);
        impl Eq for Item {}
        impl PartialOrd for Item {
            fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
                Some(self.cmp(o))
            }
        }
        impl Ord for Item {
            fn cmp(&self, o: &Self) -> Ordering {
                o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
            }
        }
        let mut best = vec![f64::INFINITY; pts.len()];
        let mut prev = vec![usize::MAX; pts.len()];
        let mut heap = BinaryHeap::new();
        best[0] = 0.0;
        heap.push(Item(0.0, 0));
        while let Some(Item(c, i)) = heap.pop() {
            if i == 1 {
                break;
            }
            if c > best[i] {
                continue;
            }
            for (j, l) in neighbors(i) {
                if c + l < best[j] {
                    best[j] = c + l;
                    prev[j] = i;
                    heap.push(Item(c + l, j));
                }
            }
        }
        if !best[1].is_finite() {
            return None;
        }
        let mut chain = vec![1usize];
        while *chain.last().unwrap() != 0 {
            chain.push(prev[*chain.last().unwrap()]);
        }
        chain.reverse();
        Some(chain.into_iter().map(|i| pts[i].clone()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{ManifoldHandle, ManifoldKind};

    fn circle_lattice() -> SampledSurface {
        SampledSurface::from_fn(vec![-1.6, -1.6], 0.05, vec![65, 65], |x| {
            let r = linalg::norm(x);
            (r - 1.0, x.iter().map(|v| v / r.max(1e-12)).collect())
        })
        .unwrap()
    }

    #[test]
    fn projects_onto_zero_level() {
        let s = circle_lattice();
        let q = s.project(&[1.2, 0.3]).unwrap();
        assert!(s.distance(&q) <= 1e-12);
        // the multilinear zero level tracks the true circle closely
        assert!((linalg::norm(&q) - 1.0).abs() < 2e-3);
    }

    #[test]
    fn sampled_handle_projects_and_measures_geodesics() {
        let m = ManifoldHandle::sampled(circle_lattice(), 0.3, std::f64::consts::PI).unwrap();
        assert!(matches!(m.kind(), ManifoldKind::Sampled(_)));
        assert!(m.project(&[0.1, 0.0]).is_err());
        let a = m.project(&[1.1, 0.0]).unwrap();
        let b = m.project(&[0.0, 0.9]).unwrap();
        let d = m.geodesic_distance(&a, &b);
        assert!((d - std::f64::consts::FRAC_PI_2).abs() < 2e-2, "{d}");
        let c = m.project(&[-1.05, 0.0]).unwrap();
        let half = m.geodesic_distance(&a, &c);
        assert!((half - std::f64::consts::PI).abs() < 3e-2, "{half}");
        let g = m.geodesic_profile(&a, &b);
        assert_eq!(g.sample(0.5), a.coords());
        let mid = g.sample(0.0);
        assert!(m.distance_to(&mid) <= 1e-12);
    }
}
