//! Isotropic covariance kernels and their derivatives up to fourth order.
//!
//! Every kernel here is written as `K(Δ) = F(‖Δ‖²/2)`. Differentiating through
//! that form gives derivative tensors that are polynomials in `Δ` weighted by
//! four scalar coefficients (`F'`, `F''`, `F'''`, `F''''`), which we evaluate
//! in closed form per family. This avoids the `0/0` cancellations of the
//! radial chain rule near the origin:
//!
//! ```text
//! ∂ᵢK      = g Δᵢ
//! ∂ᵢⱼK     = g δᵢⱼ + h ΔᵢΔⱼ
//! ∂ᵢⱼₖK    = h (δᵢⱼΔₖ + δᵢₖΔⱼ + δⱼₖΔᵢ) + p ΔᵢΔⱼΔₖ
//! ∂ᵢⱼₖₗK   = h (δᵢⱼδₖₗ + δᵢₖδⱼₗ + δᵢₗδⱼₖ) + p (six δΔΔ terms) + q ΔᵢΔⱼΔₖΔₗ
//! ```
//!
//! All three-dimensional quantities use the half-vectorisation order
//! `(11, 12, 22)`.

use nalgebra::{Matrix2, Matrix3, SMatrix, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix3x2 = SMatrix<f64, 3, 2>;

/// Dimensionless radius below which the origin limits are used.
pub const SWITCH_RADIUS: f64 = 1e-8;

/// Below this dimensionless radius [`directional_curvature_cov`] defers to the
/// tensor contraction; the radial formula divides `O(r²)` differences by `r²`.
const RADIAL_FORMULA_MIN_RADIUS: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    SquaredExponential,
    Matern32,
    Matern52,
}

impl KernelFamily {
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::SquaredExponential => "squared_exponential",
            KernelFamily::Matern32 => "matern32",
            KernelFamily::Matern52 => "matern52",
        }
    }

    /// Smoothness parameter; `∞` for the squared exponential.
    pub fn nu(self) -> f64 {
        match self {
            KernelFamily::SquaredExponential => f64::INFINITY,
            KernelFamily::Matern32 => 1.5,
            KernelFamily::Matern52 => 2.5,
        }
    }

    /// Whether `∇⁴K(0)` exists, i.e. whether the curvature process is defined.
    pub fn curvature_capable(self) -> bool {
        let class = match self {
            KernelFamily::SquaredExponential => SpectralFamily::SquaredExponential,
            KernelFamily::Matern32 | KernelFamily::Matern52 => SpectralFamily::Matern,
        };
        spectral_capability(class, self.nu())
    }

    /// Highest derivative order of `K` available everywhere (including 0).
    pub fn max_order(self) -> usize {
        if self.curvature_capable() {
            4
        } else {
            2
        }
    }

    pub(crate) fn require_curvature(self) -> Result<()> {
        if self.curvature_capable() {
            Ok(())
        } else {
            Err(Error::UnsupportedSmoothness {
                family: self.name(),
                order: 4,
            })
        }
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', ' '], "_").as_str() {
            "squared_exponential" | "sqexp" | "gaussian" => Ok(KernelFamily::SquaredExponential),
            "matern32" | "matern_32" | "matern_3/2" => Ok(KernelFamily::Matern32),
            "matern52" | "matern_52" | "matern_5/2" => Ok(KernelFamily::Matern52),
            other => Err(Error::Config(format!("unknown kernel family `{other}`"))),
        }
    }
}

impl std::fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectralFamily {
    SquaredExponential,
    Matern,
}

/// Spectral fourth-moment rule: the curvature process exists iff the
/// spectral density has a finite fourth moment. The Gaussian density always
/// does; the Matérn density decays like `λ^{-(2ν+2)}` in the plane, so the
/// moment is finite exactly when `ν > 2`. `nu` is ignored for the squared
/// exponential.
pub fn spectral_capability(family: SpectralFamily, nu: f64) -> bool {
    match family {
        SpectralFamily::SquaredExponential => true,
        SpectralFamily::Matern => nu > 2.0,
    }
}

/// Covariance family with variance `sigma2` and decay `phi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub sigma2: f64,
    pub phi: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, sigma2: f64, phi: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::Config(format!("sigma2 must be positive, got {sigma2}")));
        }
        if !(phi > 0.0 && phi.is_finite()) {
            return Err(Error::Config(format!("phi must be positive, got {phi}")));
        }
        Ok(KernelSpec { family, sigma2, phi })
    }

    /// Same family and decay with unit variance.
    pub fn correlation(self) -> Self {
        KernelSpec { sigma2: 1.0, ..self }
    }

    /// Radius measured in units of the kernel's length scale.
    pub fn scaled_radius(&self, r: f64) -> f64 {
        match self.family {
            KernelFamily::SquaredExponential => r * self.phi.sqrt(),
            KernelFamily::Matern32 | KernelFamily::Matern52 => r * self.phi,
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        radial_derivs(self, r).k0
    }

    pub(crate) fn coeffs(&self, r: f64) -> Coeffs {
        let s2 = self.sigma2;
        let near_zero = self.scaled_radius(r) < SWITCH_RADIUS;
        match self.family {
            KernelFamily::SquaredExponential => {
                let phi = self.phi;
                let k = s2 * (-phi * r * r).exp();
                Coeffs {
                    k,
                    g: -2.0 * phi * k,
                    h_dd: 4.0 * phi * phi * k,
                    h: Some(4.0 * phi * phi * k),
                    p: Some(-8.0 * phi.powi(3) * k),
                    q: Some(16.0 * phi.powi(4) * k),
                }
            }
            KernelFamily::Matern32 => {
                let a = 3f64.sqrt() * self.phi;
                let e = (-a * r).exp();
                Coeffs {
                    k: s2 * (1.0 + a * r) * e,
                    g: -s2 * a * a * e,
                    // h multiplies ΔΔᵀ and behaves like 1/r, the product like r.
                    h_dd: if near_zero { 0.0 } else { s2 * a.powi(3) * e / r },
                    h: None,
                    p: None,
                    q: None,
                }
            }
            KernelFamily::Matern52 => {
                let a = 5f64.sqrt() * self.phi;
                let e = (-a * r).exp();
                let h = s2 * a.powi(4) / 3.0 * e;
                // p and q are singular at the origin but their Δ-products vanish.
                let (p, q) = if near_zero {
                    (0.0, 0.0)
                } else {
                    (
                        -s2 * a.powi(5) / 3.0 * e / r,
                        s2 * a.powi(5) / 3.0 * (1.0 + a * r) * e / r.powi(3),
                    )
                };
                Coeffs {
                    k: s2 * (1.0 + a * r + a * a * r * r / 3.0) * e,
                    g: -s2 * a * a / 3.0 * (1.0 + a * r) * e,
                    h_dd: h,
                    h: Some(h),
                    p: Some(p),
                    q: Some(q),
                }
            }
        }
    }
}

/// `Δ = s − s'` together with its Euclidean length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Displacement {
    pub delta: Vector2<f64>,
    pub norm: f64,
}

impl Displacement {
    pub fn new(delta: Vector2<f64>) -> Self {
        Displacement { delta, norm: delta.norm() }
    }

    pub fn between(s: [f64; 2], s_prime: [f64; 2]) -> Self {
        Self::new(Vector2::new(s[0] - s_prime[0], s[1] - s_prime[1]))
    }

    pub fn zero() -> Self {
        Self::new(Vector2::zeros())
    }
}

impl From<Vector2<f64>> for Displacement {
    fn from(delta: Vector2<f64>) -> Self {
        Displacement::new(delta)
    }
}

/// `K̃(r)` and its radial derivatives. Orders above the family's smoothness
/// are `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialDerivatives {
    pub k0: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: Option<f64>,
    pub k4: Option<f64>,
}

pub fn radial_derivs(spec: &KernelSpec, r: f64) -> RadialDerivatives {
    debug_assert!(r >= 0.0);
    let s2 = spec.sigma2;
    match spec.family {
        KernelFamily::SquaredExponential => {
            let phi = spec.phi;
            let k = s2 * (-phi * r * r).exp();
            RadialDerivatives {
                k0: k,
                k1: -2.0 * phi * r * k,
                k2: (-2.0 * phi + 4.0 * phi * phi * r * r) * k,
                k3: Some((12.0 * phi * phi * r - 8.0 * phi.powi(3) * r.powi(3)) * k),
                k4: Some(
                    (12.0 * phi * phi - 48.0 * phi.powi(3) * r * r + 16.0 * phi.powi(4) * r.powi(4)) * k,
                ),
            }
        }
        KernelFamily::Matern32 => {
            let a = 3f64.sqrt() * spec.phi;
            let e = (-a * r).exp();
            RadialDerivatives {
                k0: s2 * (1.0 + a * r) * e,
                k1: -s2 * a * a * r * e,
                k2: -s2 * a * a * (1.0 - a * r) * e,
                k3: None,
                k4: None,
            }
        }
        KernelFamily::Matern52 => {
            let a = 5f64.sqrt() * spec.phi;
            let e = (-a * r).exp();
            let c2 = s2 * a * a / 3.0;
            let c4 = s2 * a.powi(4) / 3.0;
            RadialDerivatives {
                k0: s2 * (1.0 + a * r + a * a * r * r / 3.0) * e,
                k1: -c2 * r * (1.0 + a * r) * e,
                k2: -c2 * (1.0 + a * r - a * a * r * r) * e,
                k3: Some(c4 * r * (3.0 - a * r) * e),
                k4: Some(c4 * (3.0 - 5.0 * a * r + a * a * r * r) * e),
            }
        }
    }
}

/// Scalar coefficients of the derivative tensors at a fixed radius.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Coeffs {
    pub k: f64,
    pub g: f64,
    /// Coefficient of `ΔΔᵀ` in the Hessian; equals `h` when that exists.
    pub h_dd: f64,
    pub h: Option<f64>,
    pub p: Option<f64>,
    pub q: Option<f64>,
}

impl Coeffs {
    /// Evaluates the symmetric derivative tensor of order `dirs.len()` at `Δ`
    /// contracted with the given directions.
    ///
    /// Panics if the order exceeds the kernel's smoothness; callers check
    /// capability up front.
    pub fn contract(&self, delta: &Vector2<f64>, dirs: &[Vector2<f64>]) -> f64 {
        let dd = |a: usize| delta.dot(&dirs[a]);
        let vv = |a: usize, b: usize| dirs[a].dot(&dirs[b]);
        match dirs.len() {
            0 => self.k,
            1 => self.g * dd(0),
            2 => self.g * vv(0, 1) + self.h_dd * dd(0) * dd(1),
            3 => {
                let h = self.h.expect("third derivative unavailable");
                let p = self.p.expect("third derivative unavailable");
                h * (vv(0, 1) * dd(2) + vv(0, 2) * dd(1) + vv(1, 2) * dd(0))
                    + p * dd(0) * dd(1) * dd(2)
            }
            4 => {
                let h = self.h.expect("fourth derivative unavailable");
                let p = self.p.expect("fourth derivative unavailable");
                let q = self.q.expect("fourth derivative unavailable");
                let (d0, d1, d2, d3) = (dd(0), dd(1), dd(2), dd(3));
                h * (vv(0, 1) * vv(2, 3) + vv(0, 2) * vv(1, 3) + vv(0, 3) * vv(1, 2))
                    + p * (vv(0, 1) * d2 * d3
                        + vv(0, 2) * d1 * d3
                        + vv(0, 3) * d1 * d2
                        + vv(1, 2) * d0 * d3
                        + vv(1, 3) * d0 * d2
                        + vv(2, 3) * d0 * d1)
                    + q * d0 * d1 * d2 * d3
            }
            n => panic!("derivative order {n} not supported"),
        }
    }
}

/// Linear functional of the differential process at a point: either the
/// directional gradient `uᵀ∇Y` or the directional curvature `uᵀ∇²Y v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Functional {
    Value,
    Gradient(Vector2<f64>),
    Curvature(Vector2<f64>, Vector2<f64>),
}

impl Functional {
    pub fn order(&self) -> usize {
        match self {
            Functional::Value => 0,
            Functional::Gradient(_) => 1,
            Functional::Curvature(..) => 2,
        }
    }

    fn push_dirs(&self, out: &mut Vec<Vector2<f64>>) {
        match *self {
            Functional::Value => {}
            Functional::Gradient(u) => out.push(u),
            Functional::Curvature(u, v) => {
                out.push(u);
                out.push(v);
            }
        }
    }
}

/// `Cov(A Y(s), B Y(s'))` for functionals `A`, `B` and `Δ = s − s'`.
///
/// Derivatives taken at `s'` enter with sign `(−1)^order(B)`.
pub fn functional_cov(spec: &KernelSpec, delta: &Vector2<f64>, a: &Functional, b: &Functional) -> f64 {
    let coeffs = spec.coeffs(delta.norm());
    functional_cov_with(&coeffs, delta, a, b)
}

pub(crate) fn functional_cov_with(coeffs: &Coeffs, delta: &Vector2<f64>, a: &Functional, b: &Functional) -> f64 {
    let mut dirs = Vec::with_capacity(4);
    a.push_dirs(&mut dirs);
    b.push_dirs(&mut dirs);
    let sign = if b.order() % 2 == 1 { -1.0 } else { 1.0 };
    sign * coeffs.contract(delta, &dirs)
}

/// `K(Δ)`, `∇K`, `∇²K`, `∇³K` (rows vech index, columns coordinate) and `∇⁴K`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossCovBlocks {
    pub k: f64,
    pub g: Vector2<f64>,
    pub h: Matrix2<f64>,
    t3: Option<Matrix3x2>,
    t4: Option<Matrix3<f64>>,
    family: KernelFamily,
}

impl CrossCovBlocks {
    pub fn t3(&self) -> Result<&Matrix3x2> {
        self.t3.as_ref().ok_or(Error::UnsupportedSmoothness {
            family: self.family.name(),
            order: 3,
        })
    }

    pub fn t4(&self) -> Result<&Matrix3<f64>> {
        self.t4.as_ref().ok_or(Error::UnsupportedSmoothness {
            family: self.family.name(),
            order: 4,
        })
    }
}

const VECH: [(usize, usize); 3] = [(0, 0), (0, 1), (1, 1)];

fn axis(i: usize) -> Vector2<f64> {
    if i == 0 {
        Vector2::x()
    } else {
        Vector2::y()
    }
}

fn assemble_blocks(coeffs: &Coeffs, delta: &Vector2<f64>, family: KernelFamily) -> CrossCovBlocks {
    let e = |i: usize| axis(i);
    let g = Vector2::new(coeffs.contract(delta, &[e(0)]), coeffs.contract(delta, &[e(1)]));
    let h = Matrix2::from_fn(|i, j| coeffs.contract(delta, &[e(i), e(j)]));
    let (t3, t4) = if coeffs.q.is_some() {
        let t3 = Matrix3x2::from_fn(|a, k| {
            let (i, j) = VECH[a];
            coeffs.contract(delta, &[e(i), e(j), e(k)])
        });
        let t4 = Matrix3::from_fn(|a, b| {
            let (i, j) = VECH[a];
            let (k, l) = VECH[b];
            coeffs.contract(delta, &[e(i), e(j), e(k), e(l)])
        });
        (Some(t3), Some(t4))
    } else {
        (None, None)
    };
    CrossCovBlocks { k: coeffs.k, g, h, t3, t4, family }
}

/// Derivative blocks of `K` at `Δ`. Third and fourth order blocks are absent
/// for kernels that are not curvature-capable; asking for them through
/// [`CrossCovBlocks::t3`]/[`CrossCovBlocks::t4`] yields `UnsupportedSmoothness`.
pub fn cross_cov_blocks(spec: &KernelSpec, d: &Displacement) -> CrossCovBlocks {
    assemble_blocks(&spec.coeffs(d.norm), &d.delta, spec.family)
}

/// The same blocks assembled from an arbitrary radial profile by the
/// isotropic chain rule (`A₀ = K̃'' − K̃'/r` and friends). Only valid away from
/// the origin; used to cross-check the closed forms.
pub fn chain_rule_blocks(rd: &RadialDerivatives, d: &Displacement, family: KernelFamily) -> CrossCovBlocks {
    let r = d.norm;
    assert!(r > 0.0, "chain rule is singular at the origin");
    let g = rd.k1 / r;
    let a0 = rd.k2 - g;
    let h = a0 / (r * r);
    let (h3, p, q) = match (rd.k3, rd.k4) {
        (Some(k3), Some(k4)) => (
            Some(h),
            Some((k3 - 3.0 * r * h) / r.powi(3)),
            Some((k4 - 6.0 * k3 / r + 15.0 * h) / r.powi(4)),
        ),
        _ => (None, None, None),
    };
    let coeffs = Coeffs { k: rd.k0, g, h_dd: h, h: h3, p, q };
    assemble_blocks(&coeffs, &d.delta, family)
}

/// `c_{u,v}` such that `uᵀ H v = c_{u,v}ᵀ vech(H)`.
pub fn duplication_contraction(u: &Vector2<f64>, v: &Vector2<f64>) -> Vector3<f64> {
    Vector3::new(v[0] * u[0], v[0] * u[1] + v[1] * u[0], v[1] * u[1])
}

/// `Cov(D⁽²⁾_{u,u}Y(s), D⁽²⁾_{u,u}Y(s'))` from the radial derivatives via
/// `a₀ = 1 − (uᵀΔ)²/‖Δ‖²`.
pub fn directional_curvature_cov(spec: &KernelSpec, u: &Vector2<f64>, d: &Displacement) -> Result<f64> {
    spec.family.require_curvature()?;
    let r = d.norm;
    if spec.scaled_radius(r) < RADIAL_FORMULA_MIN_RADIUS {
        let c = duplication_contraction(u, u);
        let blocks = cross_cov_blocks(spec, d);
        return Ok((c.transpose() * blocks.t4()? * c)[0]);
    }
    let rd = radial_derivs(spec, r);
    let (k3, k4) = (rd.k3.unwrap_or_default(), rd.k4.unwrap_or_default());
    let a_big = rd.k2 - rd.k1 / r;
    let ud = u.dot(&d.delta);
    let a0 = 1.0 - ud * ud / (r * r);
    Ok(3.0 / (r * r) * (5.0 * a0 - 4.0) * a0 * a_big
        + 6.0 / r * (1.0 - a0) * a0 * k3
        + (1.0 - a0).powi(2) * k4)
}

/// `L×L` covariance matrix of the process at `locations`.
pub fn gram_matrix(spec: &KernelSpec, locations: &[[f64; 2]]) -> nalgebra::DMatrix<f64> {
    let n = locations.len();
    let mut m = nalgebra::DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = spec.sigma2;
        for j in 0..i {
            let d = Displacement::between(locations[i], locations[j]);
            let v = spec.value(d.norm);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}
