//! Periodic scalar coefficient fields on the unit cell.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Magic bytes opening a tabulated coefficient file.
pub const TABLE_MAGIC: &[u8; 8] = b"MVHOMTAB";

#[derive(Debug, Clone, PartialEq)]
pub enum Coefficient {
    Constant(f64),
    /// `mean + amplitude * sin(2π y_axis)`
    Sine { mean: f64, amplitude: f64, axis: usize },
    /// `mean + amplitude * (1/N) Σ_i sin(2π y_i)`
    SineSum { mean: f64, amplitude: f64 },
    /// `high` on cells of the half-period checkerboard with even parity, `low` elsewhere.
    Checkerboard { low: f64, high: f64 },
    Lattice(Arc<LatticeTable>),
}

impl Coefficient {
    pub fn eval(&self, y: &[f64]) -> f64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Sine {
                mean,
                amplitude,
                axis,
            } => mean + amplitude * (2.0 * PI * y.get(*axis).copied().unwrap_or(0.0)).sin(),
            Coefficient::SineSum { mean, amplitude } => {
                let s: f64 = y.iter().map(|v| (2.0 * PI * v).sin()).sum();
                mean + amplitude * s / y.len().max(1) as f64
            }
            Coefficient::Checkerboard { low, high } => {
                let parity: i64 = y.iter().map(|v| (2.0 * v).floor() as i64).sum();
                if parity.rem_euclid(2) == 0 {
                    *high
                } else {
                    *low
                }
            }
            Coefficient::Lattice(t) => t.eval(y),
        }
    }

    /// Exact infimum and supremum over the cell.
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            Coefficient::Constant(c) => (*c, *c),
            Coefficient::Sine { mean, amplitude, .. } | Coefficient::SineSum { mean, amplitude } => {
                (mean - amplitude.abs(), mean + amplitude.abs())
            }
            Coefficient::Checkerboard { low, high } => (low.min(*high), low.max(*high)),
            Coefficient::Lattice(t) => t.bounds(),
        }
    }

    /// Parses a named closed-form expression or a lattice reference:
    /// `2.5`, `const:2.5`, `sine:mean,amp,axis`, `sinesum:mean,amp`,
    /// `checker:low,high`, `lattice:<path>`.
    pub fn parse(expr: &str) -> Result<Self> {
        let expr = expr.trim();
        let (name, args) = expr.split_once(':').unwrap_or(("const", expr));
        let nums = |n: usize| -> Result<Vec<f64>> {
            let v: std::result::Result<Vec<f64>, _> =
                args.split(',').map(|s| s.trim().parse::<f64>()).collect();
            match v {
                Ok(v) if v.len() == n => Ok(v),
                _ => Err(Error::InvalidInput(format!(
                    "coefficient `{expr}` expects {n} numeric arguments"
                ))),
            }
        };
        match name.trim() {
            "const" => Ok(Coefficient::Constant(nums(1)?[0])),
            "sine" => {
                let v = nums(3)?;
                if v[2] < 0.0 || v[2].fract() != 0.0 {
                    return Err(Error::InvalidInput(format!("bad axis in `{expr}`")));
                }
                Ok(Coefficient::Sine {
                    mean: v[0],
                    amplitude: v[1],
                    axis: v[2] as usize,
                })
            }
            "sinesum" => {
                let v = nums(2)?;
                Ok(Coefficient::SineSum {
                    mean: v[0],
                    amplitude: v[1],
                })
            }
            "checker" => {
                let v = nums(2)?;
                Ok(Coefficient::Checkerboard {
                    low: v[0],
                    high: v[1],
                })
            }
            "lattice" => Ok(Coefficient::Lattice(Arc::new(LatticeTable::read(args.trim())?))),
            other => Err(Error::InvalidInput(format!("unknown coefficient `{other}`"))),
        }
    }
}

/// Periodic coefficient sampled on a uniform lattice of the unit cell.
///
/// File layout: 8 magic bytes, little-endian u32 dimension N, u32 points
/// per axis P, then P^N little-endian f64 values in row-major order (last
/// axis fastest). Node k sits at y = k/P.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeTable {
    dim: usize,
    points: usize,
    values: Vec<f64>,
}

impl LatticeTable {
    pub fn new(dim: usize, points: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || points == 0 {
            return Err(Error::Table("dimension and points per axis must be positive".into()));
        }
        let expected = points.checked_pow(dim as u32).ok_or_else(|| Error::Table("table too large".into()))?;
        if values.len() != expected {
            return Err(Error::Table(format!(
                "expected {expected} values, found {}",
                values.len()
            )));
        }
        Ok(Self {
            dim,
            points,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != TABLE_MAGIC {
            return Err(Error::Table("missing MVHOMTAB header".into()));
        }
        let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let points = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let body = &bytes[16..];
        if body.len() % 8 != 0 {
            return Err(Error::Table("payload is not a whole number of f64".into()));
        }
        let values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(dim, points, values)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.values.len());
        out.extend_from_slice(TABLE_MAGIC);
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.points as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::Table(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&self.to_bytes()))
            .map_err(|e| Error::Table(format!("{}: {e}", path.display())))
    }

    /// Periodic multilinear interpolation.
    pub fn eval(&self, y: &[f64]) -> f64 {
        let p = self.points;
        let mut base = vec![0usize; self.dim];
        let mut frac = vec![0.0; self.dim];
        for k in 0..self.dim {
            let x = y.get(k).copied().unwrap_or(0.0).rem_euclid(1.0) * p as f64;
            let i = x.floor();
            base[k] = (i as usize) % p;
            frac[k] = x - i;
        }
        let mut acc = 0.0;
        for mask in 0..(1usize << self.dim) {
            let mut w = 1.0;
            let mut flat = 0usize;
            for k in 0..self.dim {
                let bit = (mask >> k) & 1;
                w *= if bit == 1 { frac[k] } else { 1.0 - frac[k] };
                flat = flat * p + (base[k] + bit) % p;
            }
            if w != 0.0 {
                acc += w * self.values[flat];
            }
        }
        acc
    }

    pub fn bounds(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_named_expressions() {
        assert_eq!(Coefficient::parse("2.5").unwrap(), Coefficient::Constant(2.5));
        let a = Coefficient::parse("sine:2,1,0").unwrap();
        assert!((a.eval(&[0.25]) - 3.0).abs() < 1e-15);
        assert!((a.eval(&[0.75]) - 1.0).abs() < 1e-15);
        assert_eq!(a.bounds(), (1.0, 3.0));
        assert!(Coefficient::parse("sine:2,1").is_err());
        assert!(Coefficient::parse("bogus:1").is_err());
        let c = Coefficient::parse("checker:1,3").unwrap();
        assert_eq!(c.eval(&[0.1, 0.1]), 3.0);
        assert_eq!(c.eval(&[0.6, 0.1]), 1.0);
    }

    #[test]
    fn lattice_roundtrip_and_periodic_interpolation() {
        let values: Vec<f64> = (0..16).map(|k| k as f64).collect();
        let t = LatticeTable::new(2, 4, values).unwrap();
        let back = LatticeTable::from_bytes(&t.to_bytes()).unwrap();
        assert_eq!(t, back);
        assert_eq!(&t.to_bytes()[..8], b"MVHOMTAB");
        assert_eq!(t.to_bytes().len(), 16 + 16 * 8);
        // node (1,2) holds 1*4+2
        assert!((t.eval(&[0.25, 0.5]) - 6.0).abs() < 1e-14);
        assert!((t.eval(&[1.25, -0.5]) - 6.0).abs() < 1e-14);
        // wraps between last and first node along axis 1
        assert!((t.eval(&[0.0, 0.875]) - 1.5).abs() < 1e-14);
        assert!(LatticeTable::from_bytes(b"NOTATABLE0000000").is_err());
        assert!(LatticeTable::new(2, 4, vec![0.0; 15]).is_err());
    }
}
