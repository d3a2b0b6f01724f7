//! Synthetic test surfaces with exact derivatives, and data generated from them.

use std::f64::consts::PI;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::SpatialDataset;
use crate::error::Result;

/// Third derivatives ordered `(111, 112, 122, 222)`.
pub type Third = [f64; 4];

/// A deterministic surface with analytic derivatives up to third order.
pub trait Surface: Sync {
    fn value(&self, s: [f64; 2]) -> f64;
    fn grad(&self, s: [f64; 2]) -> Vector2<f64>;
    /// `vech` of the Hessian, `(11, 12, 22)`.
    fn hess(&self, s: [f64; 2]) -> Vector3<f64>;
    fn third(&self, s: [f64; 2]) -> Third;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pattern {
    /// `10[sin(3πs₁) + cos(3πs₂)]`
    One,
    /// `10 sin(3πs₁) cos(3πs₂)`
    Two,
}

impl Pattern {
    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            1 => Some(Pattern::One),
            2 => Some(Pattern::Two),
            _ => None,
        }
    }

    pub fn id(self) -> u8 {
        match self {
            Pattern::One => 1,
            Pattern::Two => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatternOracle {
    pub pattern: Pattern,
    pub tau2: f64,
}

impl PatternOracle {
    pub fn new(pattern: Pattern) -> Self {
        PatternOracle { pattern, tau2: 1.0 }
    }

    pub fn derivatives(&self, s: [f64; 2]) -> (Vector2<f64>, Vector3<f64>, Third) {
        oracle_derivatives(self, s)
    }
}

const W: f64 = 3.0 * PI;

impl Surface for PatternOracle {
    fn value(&self, s: [f64; 2]) -> f64 {
        let (a, b) = (W * s[0], W * s[1]);
        match self.pattern {
            Pattern::One => 10.0 * (a.sin() + b.cos()),
            Pattern::Two => 10.0 * a.sin() * b.cos(),
        }
    }

    fn grad(&self, s: [f64; 2]) -> Vector2<f64> {
        let (a, b) = (W * s[0], W * s[1]);
        let c = 10.0 * W;
        match self.pattern {
            Pattern::One => Vector2::new(c * a.cos(), -c * b.sin()),
            Pattern::Two => Vector2::new(c * a.cos() * b.cos(), -c * a.sin() * b.sin()),
        }
    }

    fn hess(&self, s: [f64; 2]) -> Vector3<f64> {
        let (a, b) = (W * s[0], W * s[1]);
        let c = 10.0 * W * W;
        match self.pattern {
            Pattern::One => Vector3::new(-c * a.sin(), 0.0, -c * b.cos()),
            Pattern::Two => {
                let m11 = a.sin() * b.cos();
                let m12 = a.cos() * b.sin();
                Vector3::new(-c * m11, -c * m12, -c * m11)
            }
        }
    }

    fn third(&self, s: [f64; 2]) -> Third {
        let (a, b) = (W * s[0], W * s[1]);
        let c = 10.0 * W.powi(3);
        match self.pattern {
            Pattern::One => [-c * a.cos(), 0.0, 0.0, c * b.sin()],
            Pattern::Two => {
                let cc = a.cos() * b.cos();
                let ss = a.sin() * b.sin();
                [-c * cc, c * ss, -c * cc, c * ss]
            }
        }
    }
}

pub fn oracle_derivatives(oracle: &PatternOracle, s: [f64; 2]) -> (Vector2<f64>, Vector3<f64>, Third) {
    (oracle.grad(s), oracle.hess(s), oracle.third(s))
}

/// `n` locations uniform on the unit square with responses `μ(s) + N(0, τ²)`.
pub fn generate(oracle: &PatternOracle, n: usize, seed: u64) -> Result<SpatialDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, oracle.tau2.sqrt())
        .map_err(|e| crate::Error::Config(format!("invalid noise variance: {e}")))?;
    let mut locations = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let s = [rng.random::<f64>(), rng.random::<f64>()];
        y.push(oracle.value(s) + noise.sample(&mut rng));
        locations.push(s);
    }
    SpatialDataset::new(locations, y, vec![])
}

/// Regular `n×n` lattice of cell centres `((i+½)/n, (j+½)/n)` scaled to the
/// box `[x0, x1]×[y0, y1]`, row-major in the second coordinate.
pub fn lattice(n: usize, x: (f64, f64), y: (f64, f64)) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let u = (i as f64 + 0.5) / n as f64;
            let v = (j as f64 + 0.5) / n as f64;
            out.push([x.0 + u * (x.1 - x.0), y.0 + v * (y.1 - y.0)]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pattern_values() {
        let p1 = PatternOracle::new(Pattern::One);
        assert!((p1.value([0.0, 0.0]) - 10.0).abs() < 1e-14);
        let p2 = PatternOracle::new(Pattern::Two);
        assert!((p2.value([1.0 / 6.0, 0.0]) - 10.0).abs() < 1e-13);
    }

    #[test]
    fn pattern_one_at_origin() {
        let (g, h, _) = PatternOracle::new(Pattern::One).derivatives([0.0, 0.0]);
        assert!((g[0] - 30.0 * PI).abs() < 1e-12);
        assert_eq!(g[1], 0.0);
        assert_eq!(h[0], 0.0);
        assert_eq!(h[1], 0.0);
        assert!((h[2] + 90.0 * PI * PI).abs() < 1e-11);
    }

    #[test]
    fn generation_is_deterministic() {
        let o = PatternOracle::new(Pattern::One);
        let a = generate(&o, 50, 7).unwrap();
        let b = generate(&o, 50, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate(&o, 50, 8).unwrap());
        assert!(a.locations.iter().all(|s| (0.0..1.0).contains(&s[0]) && (0.0..1.0).contains(&s[1])));
    }

    #[test]
    fn lattice_cells() {
        let g = lattice(19, (0.0, 1.0), (0.0, 1.0));
        assert_eq!(g.len(), 361);
        assert!((g[0][0] - 0.5 / 19.0).abs() < 1e-15);
        assert!((g[360][1] - 18.5 / 19.0).abs() < 1e-15);
    }
}
