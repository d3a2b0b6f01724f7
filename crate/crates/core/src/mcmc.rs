//! Gibbs sampler for `Y = Xβ + Z + ε` with `Z ~ GP(0, σ²R(φ))`, `ε ~ N(0, τ²I)`.
//!
//! β, Z, σ² and τ² have conjugate full conditionals; φ is updated by a
//! random-walk Metropolis step on `log φ` whose scale is tuned during burn-in
//! and frozen afterwards.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::SpatialDataset;
use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::linalg::{cholesky_jittered, JitteredCholesky};

const ACCEPT_BATCH: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub a_phi: f64,
    pub b_phi: f64,
    pub a_sigma: f64,
    pub b_sigma: f64,
    pub a_tau: f64,
    pub b_tau: f64,
    pub mu_beta: Vec<f64>,
    /// Row-major `p×p` prior covariance of β.
    pub sigma_beta: Vec<Vec<f64>>,
}

impl PriorConfig {
    pub fn validate(&self, p: usize) -> Result<()> {
        if !(self.a_phi > 0.0 && self.a_phi < self.b_phi && self.b_phi.is_finite()) {
            return Err(Error::Config(format!(
                "phi bounds must satisfy 0 < a_phi < b_phi, got ({}, {})",
                self.a_phi, self.b_phi
            )));
        }
        for (name, v) in [
            ("a_sigma", self.a_sigma),
            ("b_sigma", self.b_sigma),
            ("a_tau", self.a_tau),
            ("b_tau", self.b_tau),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.mu_beta.len() != p {
            return Err(Error::LengthMismatch { expected: p, got: self.mu_beta.len() });
        }
        if self.sigma_beta.len() != p || self.sigma_beta.iter().any(|r| r.len() != p) {
            return Err(Error::Config(format!("sigma_beta must be {p}x{p}")));
        }
        if Cholesky::new(self.sigma_beta_matrix()).is_none() {
            return Err(Error::Config("sigma_beta is not positive definite".into()));
        }
        Ok(())
    }

    pub fn sigma_beta_matrix(&self) -> DMatrix<f64> {
        let p = self.sigma_beta.len();
        DMatrix::from_fn(p, p, |i, j| self.sigma_beta[i][j])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorPreset {
    /// Weakly informative settings used for simulated data.
    #[default]
    Simulation,
    /// Wider φ and τ² priors for real-data applications.
    Applications,
}

pub fn default_priors(data: &SpatialDataset, preset: PriorPreset) -> PriorConfig {
    let p = data.n_covariates();
    let (b_phi, b_tau) = match preset {
        PriorPreset::Simulation => (30.0, 0.1),
        PriorPreset::Applications => (300.0, 1.0),
    };
    PriorConfig {
        a_phi: 3.0 / data.max_distance(),
        b_phi,
        a_sigma: 2.0,
        b_sigma: 1.0,
        a_tau: 2.0,
        b_tau,
        mu_beta: vec![0.0; p],
        sigma_beta: (0..p)
            .map(|i| (0..p).map(|j| if i == j { 1e6 } else { 0.0 }).collect())
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    pub iters: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub target_accept: f64,
}

impl Default for FitSettings {
    fn default() -> Self {
        FitSettings {
            iters: 10_000,
            burn_in: 5_000,
            thin: 1,
            seed: 0,
            target_accept: 0.44,
        }
    }
}

impl FitSettings {
    pub fn validate(&self) -> Result<()> {
        if self.iters <= self.burn_in {
            return Err(Error::Config(format!(
                "iters ({}) must exceed burn_in ({})",
                self.iters, self.burn_in
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config("target_accept must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        (self.iters - self.burn_in) / self.thin
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDraw {
    pub beta: Vec<f64>,
    pub sigma2: f64,
    pub tau2: f64,
    pub phi: f64,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorChains {
    pub family: KernelFamily,
    pub priors: PriorConfig,
    pub settings: FitSettings,
    pub locations: Vec<[f64; 2]>,
    pub draws: Vec<ChainDraw>,
    /// φ acceptance rate per block of 100 iterations, burn-in included.
    pub accept_trace: Vec<f64>,
}

impl PosteriorChains {
    pub fn kernel(&self, draw: &ChainDraw) -> Result<KernelSpec> {
        KernelSpec::new(self.family, draw.sigma2, draw.phi)
    }

    /// Indices of at most `max` draws spread evenly over the chain.
    pub fn subsample(&self, max: Option<usize>) -> Vec<usize> {
        let n = self.draws.len();
        match max {
            Some(m) if m < n && m > 0 => (0..m).map(|k| k * n / m).collect(),
            _ => (0..n).collect(),
        }
    }

    pub fn column(&self, f: impl Fn(&ChainDraw) -> f64) -> Vec<f64> {
        self.draws.iter().map(f).collect()
    }
}

fn distance_matrix(locations: &[[f64; 2]]) -> DMatrix<f64> {
    let n = locations.len();
    DMatrix::from_fn(n, n, |i, j| {
        let (a, b) = (locations[i], locations[j]);
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
    })
}

/// Jittered correlation matrix together with its factor.
struct Correlation {
    matrix: DMatrix<f64>,
    chol: JitteredCholesky,
}

impl Correlation {
    fn build(family: KernelFamily, phi: f64, dist: &DMatrix<f64>) -> Result<Self> {
        let spec = KernelSpec::new(family, 1.0, phi)?;
        let mut matrix = dist.map(|r| spec.value(r));
        let chol = cholesky_jittered(&matrix)?;
        for i in 0..matrix.nrows() {
            matrix[(i, i)] += chol.jitter;
        }
        Ok(Correlation { matrix, chol })
    }

    /// `ZᵀR⁻¹Z`.
    fn quad(&self, z: &DVector<f64>) -> f64 {
        self.chol.solve_lower_vec(z).norm_squared()
    }
}

fn std_normal_vec(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Draws from `IG(shape, rate)`.
fn inv_gamma(rng: &mut impl Rng, shape: f64, rate: f64) -> f64 {
    let g = Gamma::new(shape, 1.0 / rate).expect("positive gamma parameters");
    1.0 / g.sample(rng)
}

fn upper_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    l.transpose()
        .solve_upper_triangular(b)
        .expect("Cholesky factor has a nonzero diagonal")
}

pub fn fit(data: &SpatialDataset, family: KernelFamily, priors: &PriorConfig, settings: &FitSettings) -> Result<PosteriorChains> {
    data.validate()?;
    settings.validate()?;
    let p = data.n_covariates();
    priors.validate(p)?;
    let n = data.len();
    let x = &data.x;
    let y = &data.y;
    let xtx = x.transpose() * x;
    let dist = distance_matrix(&data.locations);

    let prior_prec = cholesky_jittered(&priors.sigma_beta_matrix())?.solve(&DMatrix::identity(p, p));
    let mu_beta = DVector::from_column_slice(&priors.mu_beta);
    let prior_shift = &prior_prec * &mu_beta;

    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);

    let mut beta = match Cholesky::new(xtx.clone()) {
        Some(c) => c.solve(&(x.transpose() * y)),
        None => DVector::zeros(p),
    };
    let resid = y - x * &beta;
    let resid_var = resid.norm_squared() / n.max(2).saturating_sub(1) as f64;
    let mut sigma2 = (resid_var / 2.0).max(1e-6);
    let mut tau2 = sigma2;
    let mut phi = (priors.a_phi * priors.b_phi).sqrt();
    let mut z = DVector::zeros(n);
    let mut corr = Correlation::build(family, phi, &dist)?;

    let mut log_step = 0.3f64.ln();
    let mut draws = Vec::with_capacity(settings.retained());
    let mut accept_trace = Vec::with_capacity(settings.iters / ACCEPT_BATCH + 1);
    let mut batch_accepts = 0usize;

    for iter in 0..settings.iters {
        // β | Z, τ²
        let prec = &prior_prec + &xtx / tau2;
        let rhs = &prior_shift + x.transpose() * (y - &z) / tau2;
        let chol = cholesky_jittered(&prec)?;
        let mean = chol.solve_vec(&rhs);
        beta = mean + upper_solve(&chol.l(), &std_normal_vec(&mut rng, p));

        // Z | β, σ², τ², φ by conditioning a prior draw on perturbed data.
        let r = y - x * &beta;
        let sigma = sigma2.sqrt();
        let z0 = corr.chol.l() * std_normal_vec(&mut rng, n) * sigma;
        let eps = std_normal_vec(&mut rng, n) * tau2.sqrt();
        let mut s = &corr.matrix * sigma2;
        for i in 0..n {
            s[(i, i)] += tau2;
        }
        let s_chol = cholesky_jittered(&s)?;
        let w = s_chol.solve_vec(&(&r - &z0 - eps));
        z = z0 + &corr.matrix * w * sigma2;

        // σ² | Z, φ
        let quad = corr.quad(&z);
        sigma2 = inv_gamma(&mut rng, priors.a_sigma + n as f64 / 2.0, priors.b_sigma + quad / 2.0);

        // τ² | β, Z
        let e = y - x * &beta - &z;
        tau2 = inv_gamma(&mut rng, priors.a_tau + n as f64 / 2.0, priors.b_tau + e.norm_squared() / 2.0);

        // φ | Z, σ²
        let step = log_step.exp();
        let xi: f64 = StandardNormal.sample(&mut rng);
        let u: f64 = rng.random();
        let proposal = phi * (step * xi).exp();
        let mut accepted = false;
        if proposal >= priors.a_phi && proposal <= priors.b_phi {
            if let Ok(cand) = Correlation::build(family, proposal, &dist) {
                let current = -0.5 * corr.chol.log_det() - 0.5 * quad / sigma2 + phi.ln();
                let cand_lp = -0.5 * cand.chol.log_det() - 0.5 * cand.quad(&z) / sigma2 + proposal.ln();
                if u.ln() < cand_lp - current {
                    phi = proposal;
                    corr = cand;
                    accepted = true;
                }
            }
        }
        if accepted {
            batch_accepts += 1;
        }
        if iter < settings.burn_in {
            let gain = 1.0 / ((iter + 1) as f64).powf(0.6);
            log_step += gain * ((accepted as u8 as f64) - settings.target_accept);
        }
        if (iter + 1) % ACCEPT_BATCH == 0 || iter + 1 == settings.iters {
            let len = (iter % ACCEPT_BATCH) + 1;
            accept_trace.push(batch_accepts as f64 / len as f64);
            batch_accepts = 0;
        }

        if iter >= settings.burn_in && (iter + 1 - settings.burn_in) % settings.thin == 0 {
            draws.push(ChainDraw {
                beta: beta.iter().copied().collect(),
                sigma2,
                tau2,
                phi,
                z: z.iter().copied().collect(),
            });
        }
    }

    Ok(PosteriorChains {
        family,
        priors: priors.clone(),
        settings: *settings,
        locations: data.locations.clone(),
        draws,
        accept_trace,
    })
}

/// Unnormalised log posterior density of a state.
pub fn log_joint(data: &SpatialDataset, family: KernelFamily, priors: &PriorConfig, draw: &ChainDraw) -> Result<f64> {
    let n = data.len() as f64;
    if draw.phi < priors.a_phi || draw.phi > priors.b_phi || draw.sigma2 <= 0.0 || draw.tau2 <= 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let beta = DVector::from_column_slice(&draw.beta);
    let z = DVector::from_column_slice(&draw.z);
    let e = &data.y - &data.x * &beta - &z;
    let lik = -0.5 * n * draw.tau2.ln() - 0.5 * e.norm_squared() / draw.tau2;

    let corr = Correlation::build(family, draw.phi, &distance_matrix(&data.locations))?;
    let z_prior = -0.5 * n * draw.sigma2.ln() - 0.5 * corr.chol.log_det() - 0.5 * corr.quad(&z) / draw.sigma2;

    let sb = cholesky_jittered(&priors.sigma_beta_matrix())?;
    let db = beta - DVector::from_column_slice(&priors.mu_beta);
    let beta_prior = -0.5 * sb.solve_lower_vec(&db).norm_squared();

    let ig = |x: f64, a: f64, b: f64| -(a + 1.0) * x.ln() - b / x;
    Ok(lik
        + z_prior
        + beta_prior
        + ig(draw.sigma2, priors.a_sigma, priors.b_sigma)
        + ig(draw.tau2, priors.a_tau, priors.b_tau))
}
