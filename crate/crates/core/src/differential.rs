//! Conditional Gaussian law of the gradient and Hessian of a process at new
//! locations, posterior sampling over a grid, and derived surface operators.

use nalgebra::{DMatrix, DVector, SMatrix, SVector, Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curves::ScalarGrid;
use crate::error::{Error, Result};
use crate::kernels::{functional_cov_with, Functional, KernelSpec};
use crate::linalg::{cholesky_jittered, sampling_factor, JitteredCholesky};
use crate::mcmc::PosteriorChains;
use crate::summary::{summarize, Summary};

pub type Vector5 = SVector<f64, 5>;
pub type Matrix5 = SMatrix<f64, 5, 5>;
pub type Vector6 = SVector<f64, 6>;
pub type Matrix6 = SMatrix<f64, 6, 6>;

/// Law of `(∇Y(s₀), vech ∇²Y(s₀))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DifferentialLaw {
    pub mean: Vector5,
    pub cov: Matrix5,
}

/// Law of `(Y(s₀), ∇Y(s₀), vech ∇²Y(s₀))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldLaw {
    pub mean: Vector6,
    pub cov: Matrix6,
}

impl FieldLaw {
    pub fn differential(&self) -> DifferentialLaw {
        DifferentialLaw {
            mean: self.mean.fixed_rows::<5>(1).into_owned(),
            cov: self.cov.fixed_view::<5, 5>(1, 1).into_owned(),
        }
    }

    /// One draw `mean + L ξ`.
    pub fn sample<R: rand::Rng>(&self, rng: &mut R) -> Vector6 {
        let l = match self.cov.cholesky() {
            Some(c) => c.l(),
            None => {
                let f = sampling_factor(&DMatrix::from_iterator(6, 6, self.cov.iter().copied()));
                Matrix6::from_iterator(f.iter().copied())
            }
        };
        let xi = Vector6::from_fn(|_, _| StandardNormal.sample(rng));
        self.mean + l * xi
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DifferentialDraw {
    pub location: [f64; 2],
    pub grad: Vector2<f64>,
    pub hess_vech: Vector3<f64>,
}

impl DifferentialDraw {
    pub fn from_vector(location: [f64; 2], v: &Vector5) -> Self {
        DifferentialDraw {
            location,
            grad: Vector2::new(v[0], v[1]),
            hess_vech: Vector3::new(v[2], v[3], v[4]),
        }
    }
}

fn target_functionals() -> [Functional; 6] {
    let (e1, e2) = (Vector2::x(), Vector2::y());
    [
        Functional::Value,
        Functional::Gradient(e1),
        Functional::Gradient(e2),
        Functional::Curvature(e1, e1),
        Functional::Curvature(e1, e2),
        Functional::Curvature(e2, e2),
    ]
}

/// Prior covariance of `(Y, ∇Y, vech ∇²Y)` at a single point.
pub fn point_covariance(spec: &KernelSpec) -> Result<Matrix6> {
    spec.family.require_curvature()?;
    let f = target_functionals();
    let zero = Vector2::zeros();
    let coeffs = spec.coeffs(0.0);
    Ok(Matrix6::from_fn(|a, b| functional_cov_with(&coeffs, &zero, &f[a], &f[b])))
}

/// `Cov(Y(sᵢ), F(s₀))` for the six target functionals `F`.
pub fn cross_covariance_row(spec: &KernelSpec, s_i: [f64; 2], s0: [f64; 2]) -> SVector<f64, 6> {
    let f = target_functionals();
    let delta = Vector2::new(s_i[0] - s0[0], s_i[1] - s0[1]);
    let coeffs = spec.coeffs(delta.norm());
    SVector::<f64, 6>::from_fn(|a, _| functional_cov_with(&coeffs, &delta, &Functional::Value, &f[a]))
}

/// Joint prior covariance of the process at `locations` followed by
/// `(Y, ∇Y, vech ∇²Y)` at each of `targets`, i.e. a matrix of size
/// `L + 6·targets.len()`.
pub fn joint_covariance(spec: &KernelSpec, locations: &[[f64; 2]], targets: &[[f64; 2]]) -> Result<DMatrix<f64>> {
    spec.family.require_curvature()?;
    let n = locations.len();
    let f = target_functionals();
    let mut m = DMatrix::zeros(n + 6 * targets.len(), n + 6 * targets.len());
    m.view_mut((0, 0), (n, n)).copy_from(&crate::kernels::gram_matrix(spec, locations));
    for (t, s0) in targets.iter().enumerate() {
        let off = n + 6 * t;
        for (i, s) in locations.iter().enumerate() {
            let row = cross_covariance_row(spec, *s, *s0);
            for a in 0..6 {
                m[(i, off + a)] = row[a];
                m[(off + a, i)] = row[a];
            }
        }
        for (u, s1) in targets.iter().enumerate().take(t + 1) {
            let off_u = n + 6 * u;
            let delta = Vector2::new(s0[0] - s1[0], s0[1] - s1[1]);
            let coeffs = spec.coeffs(delta.norm());
            for a in 0..6 {
                for b in 0..6 {
                    let v = functional_cov_with(&coeffs, &delta, &f[a], &f[b]);
                    m[(off + a, off_u + b)] = v;
                    m[(off_u + b, off + a)] = v;
                }
            }
        }
    }
    Ok(m)
}

/// Observations of a process with a factored covariance, reusable across any
/// number of target points.
pub struct Conditioner<'a> {
    spec: KernelSpec,
    locations: &'a [[f64; 2]],
    chol: JitteredCholesky,
    weights: DVector<f64>,
    prior: Matrix6,
}

impl<'a> Conditioner<'a> {
    /// `values` observed at `locations` with prior mean `mean` and independent
    /// noise of variance `nugget` (zero for the latent surface).
    pub fn new(spec: KernelSpec, locations: &'a [[f64; 2]], values: &[f64], mean: &[f64], nugget: f64) -> Result<Self> {
        let n = locations.len();
        if n == 0 {
            return Err(Error::Config("no conditioning locations".into()));
        }
        for len in [values.len(), mean.len()] {
            if len != n {
                return Err(Error::LengthMismatch { expected: n, got: len });
            }
        }
        let prior = point_covariance(&spec)?;
        let mut gram = crate::kernels::gram_matrix(&spec, locations);
        for i in 0..n {
            gram[(i, i)] += nugget;
        }
        let chol = cholesky_jittered(&gram)?;
        let resid = DVector::from_iterator(n, values.iter().zip(mean).map(|(v, m)| v - m));
        let weights = chol.solve_vec(&resid);
        Ok(Conditioner { spec, locations, chol, weights, prior })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    /// Law at `s0` with zero mean surface.
    pub fn law_at(&self, s0: [f64; 2]) -> FieldLaw {
        let n = self.locations.len();
        let mut c = DMatrix::zeros(n, 6);
        for (i, s) in self.locations.iter().enumerate() {
            let row = cross_covariance_row(&self.spec, *s, s0);
            for a in 0..6 {
                c[(i, a)] = row[a];
            }
        }
        let mean = c.transpose() * &self.weights;
        let w = self.chol.solve_lower(&c);
        let reduction = w.transpose() * w;
        let mut cov = self.prior;
        for a in 0..6 {
            for b in 0..6 {
                cov[(a, b)] -= 0.5 * (reduction[(a, b)] + reduction[(b, a)]);
            }
        }
        FieldLaw {
            mean: Vector6::from_iterator(mean.iter().copied()),
            cov,
        }
    }
}

/// Exact conditional law of the differential process at `s0` given
/// `field_values` at `locations`, with mean surface `field_mean` at the data
/// and mean derivatives `mean_derivs` at `s0`.
pub fn conditional_differential(
    spec: &KernelSpec,
    locations: &[[f64; 2]],
    field_values: &[f64],
    field_mean: &[f64],
    mean_derivs: (Vector2<f64>, Vector3<f64>),
    s0: [f64; 2],
) -> Result<DifferentialLaw> {
    let cond = Conditioner::new(*spec, locations, field_values, field_mean, 0.0)?;
    let mut law = cond.law_at(s0).differential();
    let (g, h) = mean_derivs;
    law.mean += Vector5::new(g[0], g[1], h[0], h[1], h[2]);
    Ok(law)
}

pub fn divergence(d: &DifferentialDraw) -> f64 {
    d.grad[0] + d.grad[1]
}

pub fn laplacian(d: &DifferentialDraw) -> f64 {
    d.hess_vech[0] + d.hess_vech[2]
}

/// Direction of steepest ascent, `atan2(∇₂, ∇₁)`.
pub fn aspect(d: &DifferentialDraw) -> f64 {
    d.grad[1].atan2(d.grad[0])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureSummary {
    pub eigen1: f64,
    pub eigen2: f64,
    pub gaussian: f64,
    pub theta_pc: f64,
}

fn normal_curvature(h: &Vector3<f64>, theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    h[0] * c * c + 2.0 * h[1] * c * s + h[2] * s * s
}

fn wrap_half_turn(theta: f64) -> f64 {
    let t = theta.rem_euclid(std::f64::consts::PI);
    if t >= std::f64::consts::PI {
        0.0
    } else {
        t
    }
}

pub fn curvature_summary(d: &DifferentialDraw) -> CurvatureSummary {
    let h = d.hess_vech;
    let (a, b, c) = (h[0], h[1], h[2]);
    let mid = 0.5 * (a + c);
    let rad = (0.5 * (a - c)).hypot(b);
    let scale = a.abs().max(c.abs()).max(b.abs());
    let theta_pc = if b.abs() <= 1e-12 * scale || scale == 0.0 {
        if a.abs() >= c.abs() {
            0.0
        } else {
            std::f64::consts::FRAC_PI_2
        }
    } else {
        let h1 = (a - c) / b;
        let disc = (h1 * h1 + 4.0).sqrt();
        let t1 = wrap_half_turn(((-h1 + disc) / 2.0).atan());
        let t2 = wrap_half_turn(((-h1 - disc) / 2.0).atan());
        let (k1, k2) = (normal_curvature(&h, t1).abs(), normal_curvature(&h, t2).abs());
        if (k1 - k2).abs() <= 1e-12 * scale {
            t1.min(t2)
        } else if k1 > k2 {
            t1
        } else {
            t2
        }
    };
    CurvatureSummary {
        eigen1: mid + rad,
        eigen2: mid - rad,
        gaussian: a * c - b * b,
        theta_pc,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridField {
    Z,
    Grad1,
    Grad2,
    Hess11,
    Hess12,
    Hess22,
    Divergence,
    Laplacian,
    Eigen1,
    Eigen2,
    Gaussian,
    ThetaPc,
}

impl GridField {
    pub const ALL: [GridField; 12] = [
        GridField::Z,
        GridField::Grad1,
        GridField::Grad2,
        GridField::Hess11,
        GridField::Hess12,
        GridField::Hess22,
        GridField::Divergence,
        GridField::Laplacian,
        GridField::Eigen1,
        GridField::Eigen2,
        GridField::Gaussian,
        GridField::ThetaPc,
    ];

    pub fn index(self) -> usize {
        GridField::ALL.iter().position(|f| *f == self).expect("listed field")
    }

    pub fn name(self) -> &'static str {
        match self {
            GridField::Z => "z",
            GridField::Grad1 => "grad1",
            GridField::Grad2 => "grad2",
            GridField::Hess11 => "hess11",
            GridField::Hess12 => "hess12",
            GridField::Hess22 => "hess22",
            GridField::Divergence => "divergence",
            GridField::Laplacian => "laplacian",
            GridField::Eigen1 => "eigen1",
            GridField::Eigen2 => "eigen2",
            GridField::Gaussian => "gaussian",
            GridField::ThetaPc => "theta_pc",
        }
    }
}

impl std::str::FromStr for GridField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GridField::ALL
            .iter()
            .copied()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown grid field `{s}`")))
    }
}

/// Every derived quantity of one joint draw, in [`GridField::ALL`] order.
pub fn derived_fields(location: [f64; 2], v: &Vector6) -> [f64; 12] {
    let d = DifferentialDraw::from_vector(location, &v.fixed_rows::<5>(1).into_owned());
    let cs = curvature_summary(&d);
    [
        v[0],
        v[1],
        v[2],
        v[3],
        v[4],
        v[5],
        divergence(&d),
        laplacian(&d),
        cs.eigen1,
        cs.eigen2,
        cs.gaussian,
        cs.theta_pc,
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSummary {
    pub alpha: f64,
    pub points: Vec<[f64; 2]>,
    /// `summaries[point][field]`, fields in [`GridField::ALL`] order.
    pub summaries: Vec<Vec<Summary>>,
}

impl GridSummary {
    pub fn get(&self, point: usize, field: GridField) -> &Summary {
        &self.summaries[point][field.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifferentialSettings {
    pub alpha: f64,
    /// Use at most this many evenly spaced posterior draws.
    pub max_draws: Option<usize>,
    pub seed: u64,
}

impl Default for DifferentialSettings {
    fn default() -> Self {
        DifferentialSettings {
            alpha: 0.05,
            max_draws: None,
            seed: 0,
        }
    }
}

/// Stream-separated generator for posterior draw `index`.
pub(crate) fn draw_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Per retained draw, one joint sample of the latent surface's value and
/// derivatives at every grid point. Returns `samples[draw][point]`.
pub fn grid_draws(chains: &PosteriorChains, grid: &[[f64; 2]], settings: &DifferentialSettings) -> Result<Vec<Vec<Vector6>>> {
    chains.family.require_curvature()?;
    if chains.draws.is_empty() {
        return Err(Error::EmptySamples);
    }
    let zero = vec![0.0; chains.locations.len()];
    chains
        .subsample(settings.max_draws)
        .into_par_iter()
        .map(|idx| {
            let draw = &chains.draws[idx];
            let spec = chains.kernel(draw)?;
            let cond = Conditioner::new(spec, &chains.locations, &draw.z, &zero, 0.0)?;
            let mut rng = draw_rng(settings.seed, idx);
            Ok(grid.iter().map(|s| cond.law_at(*s).sample(&mut rng)).collect())
        })
        .collect()
}

pub fn sample_differentials(chains: &PosteriorChains, grid: &[[f64; 2]], settings: &DifferentialSettings) -> Result<GridSummary> {
    if !(settings.alpha > 0.0 && settings.alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", settings.alpha)));
    }
    let draws = grid_draws(chains, grid, settings)?;
    let prob = 1.0 - settings.alpha;
    let summaries = (0..grid.len())
        .into_par_iter()
        .map(|p| {
            let derived: Vec<[f64; 12]> = draws.iter().map(|d| derived_fields(grid[p], &d[p])).collect();
            (0..12)
                .map(|f| {
                    let col: Vec<f64> = derived.iter().map(|row| row[f]).collect();
                    summarize(&col, prob)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GridSummary {
        alpha: settings.alpha,
        points: grid.to_vec(),
        summaries,
    })
}

/// Posterior mean of `β₀ + Z(s)` on the nodes of a regular grid, averaged over
/// (a subsample of) the retained draws. Covariates other than the intercept
/// are unknown off the data and are left out. Used to pick level curves.
pub fn posterior_mean_grid(
    chains: &PosteriorChains,
    x: (f64, f64),
    y: (f64, f64),
    nx: usize,
    ny: usize,
    max_draws: Option<usize>,
) -> Result<ScalarGrid> {
    if chains.draws.is_empty() {
        return Err(Error::EmptySamples);
    }
    let template = ScalarGrid::from_fn(x, y, nx, ny, |_| 0.0);
    template.validate()?;
    let idx = chains.subsample(max_draws);
    let sums = idx
        .par_iter()
        .map(|&i| {
            let draw = &chains.draws[i];
            let spec = chains.kernel(draw)?;
            let gram = crate::kernels::gram_matrix(&spec, &chains.locations);
            let weights = cholesky_jittered(&gram)?.solve_vec(&DVector::from_column_slice(&draw.z));
            let mut out = vec![draw.beta[0]; nx * ny];
            for j in 0..ny {
                for k in 0..nx {
                    let s0 = template.node(k, j);
                    let mut acc = 0.0;
                    for (w, s) in weights.iter().zip(&chains.locations) {
                        acc += w * spec.value(((s[0] - s0[0]).powi(2) + (s[1] - s0[1]).powi(2)).sqrt());
                    }
                    out[j * nx + k] += acc;
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let m = sums.len() as f64;
    let values = (0..nx * ny).map(|p| sums.iter().map(|v| v[p]).sum::<f64>() / m).collect();
    Ok(ScalarGrid { values, ..template })
}
