//! Gauss–Legendre rules on intervals, squares and triangles.

use crate::error::{Error, Result};

/// Nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "need at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussLegendre { nodes, weights }
    }

    /// `∫_a^b f`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }

    /// Nodes mapped to `[0, t]` with matching weights.
    pub fn on_interval(&self, t: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (0.5 * t * (x + 1.0), 0.5 * t * w))
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Side length of a tensor rule with `n_quad_2d` nodes.
pub fn tensor_side(n_quad_2d: usize) -> Result<usize> {
    let side = (n_quad_2d as f64).sqrt().round() as usize;
    if side == 0 || side * side != n_quad_2d {
        return Err(Error::Config(format!(
            "two-dimensional quadrature needs a perfect square node count, got {n_quad_2d}"
        )));
    }
    Ok(side)
}

/// `∫_0^a ∫_0^b f(t1, t2) dt2 dt1`.
pub fn integrate_rect<F: FnMut(f64, f64) -> f64>(rule: &GaussLegendre, a: f64, b: f64, mut f: F) -> f64 {
    let mut total = 0.0;
    for (t1, w1) in rule.on_interval(a) {
        for (t2, w2) in rule.on_interval(b) {
            total += w1 * w2 * f(t1, t2);
        }
    }
    total
}

/// Integral over the triangle `(a, b, c)` using the collapsed square map.
pub fn integrate_triangle<F: FnMut(f64, f64) -> f64>(
    rule: &GaussLegendre,
    a: [f64; 2],
    b: [f64; 2],
    c: [f64; 2],
    mut f: F,
) -> f64 {
    let area2 = ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])).abs();
    let mut total = 0.0;
    for (u, wu) in rule.on_interval(1.0) {
        for (v, wv) in rule.on_interval(1.0) {
            // (u, v) ∈ [0,1]² ↦ barycentric (u, (1−u)v), Jacobian (1−u).
            let l1 = u;
            let l2 = (1.0 - u) * v;
            let x = a[0] + l1 * (b[0] - a[0]) + l2 * (c[0] - a[0]);
            let y = a[1] + l1 * (b[1] - a[1]) + l2 * (c[1] - a[1]);
            total += wu * wv * (1.0 - u) * f(x, y);
        }
    }
    total * area2
}
