//! Run configuration, read from a TOML document.
//!
//! Every section and key is optional; missing values take the defaults shown
//! in the repository README. The only environment input is
//! [`OUT_DIR_ENV`], which replaces `out_dir`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::curves::convex_hull;
use crate::data::SpatialDataset;
use crate::differential::DifferentialSettings;
use crate::error::{Error, Result};
use crate::kernels::KernelFamily;
use crate::mcmc::{default_priors, FitSettings, PriorConfig, PriorPreset};
use crate::simulate::lattice;
use crate::wombling::{WombMode, WomblingSettings};

pub const OUT_DIR_ENV: &str = "CURVWOMB_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every random stream in a run is derived from it.
    pub seed: u64,
    /// HPD level is `1 − alpha`.
    pub alpha: f64,
    pub out_dir: PathBuf,
    pub kernel: KernelConfig,
    pub priors: PriorOverrides,
    pub mcmc: McmcConfig,
    pub grid: GridConfig,
    pub differentials: DifferentialsConfig,
    pub wombling: WomblingConfig,
    pub service: ServiceConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            alpha: 0.05,
            out_dir: PathBuf::from("out"),
            kernel: KernelConfig::default(),
            priors: PriorOverrides::default(),
            mcmc: McmcConfig::default(),
            grid: GridConfig::default(),
            differentials: DifferentialsConfig::default(),
            wombling: WomblingConfig::default(),
            service: ServiceConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    /// `squared_exponential`, `matern`, `matern32` or `matern52`.
    pub family: String,
    /// Required for plain `matern`; otherwise must agree with the family.
    pub nu: Option<f64>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig { family: "matern52".into(), nu: None }
    }
}

impl KernelConfig {
    pub fn resolve(&self) -> Result<KernelFamily> {
        let family = if self.family.eq_ignore_ascii_case("matern") {
            match self.nu {
                Some(nu) if nu == 1.5 => KernelFamily::Matern32,
                Some(nu) if nu == 2.5 => KernelFamily::Matern52,
                Some(nu) => return Err(Error::Config(format!("Matérn smoothness must be 1.5 or 2.5, got {nu}"))),
                None => return Err(Error::Config("kernel `matern` needs `nu`".into())),
            }
        } else {
            self.family.parse::<KernelFamily>()?
        };
        if let Some(nu) = self.nu {
            if family.nu() != nu && !(nu.is_infinite() && family.nu().is_infinite()) {
                return Err(Error::Config(format!("nu = {nu} contradicts kernel {family}")));
            }
        }
        Ok(family)
    }
}

/// Preset priors with optional per-field replacements.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorOverrides {
    pub preset: PriorPreset,
    pub a_phi: Option<f64>,
    pub b_phi: Option<f64>,
    pub a_sigma: Option<f64>,
    pub b_sigma: Option<f64>,
    pub a_tau: Option<f64>,
    pub b_tau: Option<f64>,
    pub mu_beta: Option<Vec<f64>>,
    pub sigma_beta: Option<Vec<Vec<f64>>>,
}

impl PriorOverrides {
    pub fn resolve(&self, data: &SpatialDataset) -> Result<PriorConfig> {
        let mut p = default_priors(data, self.preset);
        let scalars = [
            (&mut p.a_phi, self.a_phi),
            (&mut p.b_phi, self.b_phi),
            (&mut p.a_sigma, self.a_sigma),
            (&mut p.b_sigma, self.b_sigma),
            (&mut p.a_tau, self.a_tau),
            (&mut p.b_tau, self.b_tau),
        ];
        for (slot, v) in scalars {
            if let Some(v) = v {
                *slot = v;
            }
        }
        if let Some(m) = &self.mu_beta {
            p.mu_beta = m.clone();
        }
        if let Some(s) = &self.sigma_beta {
            p.sigma_beta = s.clone();
        }
        p.validate(data.n_covariates())?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcConfig {
    pub iters: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub target_accept: f64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        let f = FitSettings::default();
        McmcConfig { iters: f.iters, burn_in: f.burn_in, thin: f.thin, target_accept: f.target_accept }
    }
}

/// Inference lattice: `n×n` cell centres over `bounds = [x0, x1, y0, y1]`, or
/// over the data bounding box when no bounds are given. With `hull` set, only
/// points inside the convex hull of the data are kept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub bounds: Option<[f64; 4]>,
    pub hull: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { n: 19, bounds: None, hull: false }
    }
}

fn bounding_box(points: &[[f64; 2]]) -> [f64; 4] {
    let mut b = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
    for p in points {
        b[0] = b[0].min(p[0]);
        b[1] = b[1].max(p[0]);
        b[2] = b[2].min(p[1]);
        b[3] = b[3].max(p[1]);
    }
    b
}

fn inside_convex(hull: &[[f64; 2]], p: [f64; 2]) -> bool {
    if hull.len() < 3 {
        return false;
    }
    // counterclockwise hull: p is inside when it is left of (or on) every edge
    (0..hull.len()).all(|i| {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= -1e-12
    })
}

impl GridConfig {
    pub fn points(&self, data_locations: &[[f64; 2]]) -> Result<Vec<[f64; 2]>> {
        if self.n == 0 {
            return Err(Error::Config("grid.n must be positive".into()));
        }
        let b = match self.bounds {
            Some(b) => b,
            None if data_locations.is_empty() => return Err(Error::Config("grid bounds need data locations".into())),
            None => bounding_box(data_locations),
        };
        if !(b[0] < b[1] && b[2] < b[3]) || b.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!("grid bounds {b:?} are empty")));
        }
        let mut pts = lattice(self.n, (b[0], b[1]), (b[2], b[3]));
        if self.hull {
            let hull = convex_hull(data_locations);
            pts.retain(|p| inside_convex(&hull, *p));
        }
        Ok(pts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DifferentialsConfig {
    pub max_draws: Option<usize>,
}

impl Default for DifferentialsConfig {
    fn default() -> Self {
        DifferentialsConfig { max_draws: Some(1000) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WomblingConfig {
    pub n_quad_1d: usize,
    /// Nodes per 2D cell; must be a perfect square.
    pub n_quad_2d: usize,
    pub mode: WombMode,
    pub max_draws: Option<usize>,
    /// Longest allowed segment after refinement.
    pub max_norm: f64,
    pub analytic: bool,
    /// Nodes per side of the posterior-mean grid used for level curves.
    pub level_resolution: usize,
    pub curves: Vec<PathBuf>,
}

impl Default for WomblingConfig {
    fn default() -> Self {
        let w = WomblingSettings::default();
        WomblingConfig {
            n_quad_1d: w.n_quad_1d,
            n_quad_2d: w.n_quad_2d,
            mode: w.mode,
            max_draws: Some(500),
            max_norm: 0.02,
            analytic: w.analytic,
            level_resolution: 101,
            curves: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    /// Fit jobs allowed to run at the same time.
    pub max_concurrent_fits: usize,
    /// Where datasets, chain files and job records are kept. Relative paths
    /// resolve against `out_dir`.
    pub data_dir: PathBuf,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig { bind: "127.0.0.1:8080".into(), max_concurrent_fits: 1, data_dir: PathBuf::from("service") }
    }
}

// Offsets separating the random streams of each stage.
const DIFFERENTIALS_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;
const WOMBLING_STREAM: u64 = 0x6a09_e667_f3bc_c909;

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration always serialises")
    }

    /// Reads, applies the output-directory override and validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.apply_env();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self) {
        if let Some(dir) = std::env::var_os(OUT_DIR_ENV).filter(|d| !d.is_empty()) {
            self.out_dir = PathBuf::from(dir);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        self.kernel.resolve()?;
        self.fit_settings().validate()?;
        self.womble_settings().validate()?;
        if !(self.wombling.max_norm > 0.0 && self.wombling.max_norm.is_finite()) {
            return Err(Error::Config("wombling.max_norm must be positive".into()));
        }
        if self.wombling.level_resolution < 2 {
            return Err(Error::Config("wombling.level_resolution must be at least 2".into()));
        }
        if self.grid.n == 0 {
            return Err(Error::Config("grid.n must be positive".into()));
        }
        if self.service.max_concurrent_fits == 0 {
            return Err(Error::Config("service.max_concurrent_fits must be positive".into()));
        }
        for c in &self.wombling.curves {
            if !c.is_file() {
                return Err(Error::Config(format!("curve file {} does not exist", c.display())));
            }
        }
        Ok(())
    }

    pub fn family(&self) -> Result<KernelFamily> {
        self.kernel.resolve()
    }

    pub fn fit_settings(&self) -> FitSettings {
        FitSettings {
            iters: self.mcmc.iters,
            burn_in: self.mcmc.burn_in,
            thin: self.mcmc.thin,
            seed: self.seed,
            target_accept: self.mcmc.target_accept,
        }
    }

    pub fn differential_settings(&self) -> DifferentialSettings {
        DifferentialSettings {
            alpha: self.alpha,
            max_draws: self.differentials.max_draws,
            seed: self.seed ^ DIFFERENTIALS_STREAM,
        }
    }

    pub fn womble_settings(&self) -> WomblingSettings {
        WomblingSettings {
            n_quad_1d: self.wombling.n_quad_1d,
            n_quad_2d: self.wombling.n_quad_2d,
            alpha: self.alpha,
            mode: self.wombling.mode,
            max_draws: self.wombling.max_draws,
            seed: self.seed ^ WOMBLING_STREAM,
            analytic: self.wombling.analytic,
        }
    }

    pub fn service_data_dir(&self) -> PathBuf {
        if self.service.data_dir.is_absolute() {
            self.service.data_dir.clone()
        } else {
            self.out_dir.join(&self.service.data_dir)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = RunConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        cfg.validate().unwrap();
        assert_eq!(cfg.family().unwrap(), KernelFamily::Matern52);
    }

    #[test]
    fn round_trip() {
        let text = r#"
seed = 7
alpha = 0.1
out_dir = "results"

[kernel]
family = "matern"
nu = 2.5

[priors]
preset = "applications"
b_tau = 0.5

[mcmc]
iters = 2000
burn_in = 1000
thin = 2

[grid]
n = 10
bounds = [0.0, 1.0, 0.0, 2.0]
hull = true

[wombling]
mode = "fast"
n_quad_2d = 16
"#;
        let cfg = RunConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.family().unwrap(), KernelFamily::Matern52);
        assert_eq!(cfg.fit_settings().seed, 7);
        assert_eq!(cfg.womble_settings().mode, WombMode::Fast);
        assert_eq!(cfg.grid.bounds, Some([0.0, 1.0, 0.0, 2.0]));
        assert_eq!(RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(RunConfig::from_toml_str("sede = 1").is_err());
        assert!(RunConfig::from_toml_str("[kernel]\nfamily = \"matern\"").unwrap().family().is_err());
        assert!(RunConfig::from_toml_str("[kernel]\nfamily = \"matern52\"\nnu = 1.5").unwrap().family().is_err());
        let cfg = RunConfig::from_toml_str("[mcmc]\niters = 10\nburn_in = 20").unwrap();
        assert!(cfg.validate().is_err());
        let cfg = RunConfig::from_toml_str("[wombling]\ncurves = [\"/no/such/curve.json\"]").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn stage_seeds_differ() {
        let cfg = RunConfig { seed: 3, ..Default::default() };
        let seeds = [cfg.fit_settings().seed, cfg.differential_settings().seed, cfg.womble_settings().seed];
        assert!(seeds[0] != seeds[1] && seeds[1] != seeds[2] && seeds[0] != seeds[2]);
    }

    #[test]
    fn grid_points_respect_hull() {
        let data = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let all = GridConfig { n: 10, bounds: None, hull: false }.points(&data).unwrap();
        assert_eq!(all.len(), 100);
        let inside = GridConfig { n: 10, bounds: None, hull: true }.points(&data).unwrap();
        assert!(inside.iter().all(|p| p[0] + p[1] <= 1.0 + 1e-12));
        assert_eq!(inside.len(), 55);
    }

    #[test]
    fn prior_overrides_apply() {
        let ds = SpatialDataset::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![1.0, 2.0, 3.0], vec![]).unwrap();
        let o = PriorOverrides { b_phi: Some(12.0), ..Default::default() };
        let p = o.resolve(&ds).unwrap();
        assert_eq!(p.b_phi, 12.0);
        assert_eq!(p.a_sigma, 2.0);
        let o = PriorOverrides { mu_beta: Some(vec![0.0, 1.0]), ..Default::default() };
        assert!(o.resolve(&ds).is_err());
    }
}
