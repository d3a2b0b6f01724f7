//! End-to-end stages driven by a [`RunConfig`]. The command line and the HTTP
//! service both go through these functions, so identical inputs and seeds
//! give identical outputs.

use crate::config::RunConfig;
use crate::curves::{realize, CurveDoc, CurveDocKind, Orientation, Partition, ScalarGrid};
use crate::data::SpatialDataset;
use crate::differential::{posterior_mean_grid, sample_differentials, GridSummary};
use crate::error::{Error, Result};
use crate::mcmc::{fit, PosteriorChains};
use crate::simulate::{PatternOracle, Surface};
use crate::wombling::{sample_wombling, true_wombling, WomblingResult, WomblingTruth, TRUTH_NODES};

pub fn run_fit(data: &SpatialDataset, cfg: &RunConfig) -> Result<PosteriorChains> {
    let priors = cfg.priors.resolve(data)?;
    fit(data, cfg.family()?, &priors, &cfg.fit_settings())
}

pub fn run_differentials(chains: &PosteriorChains, cfg: &RunConfig) -> Result<GridSummary> {
    if chains.draws.is_empty() {
        return Err(Error::EmptySamples);
    }
    let grid = cfg.grid.points(&chains.locations)?;
    sample_differentials(chains, &grid, &cfg.differential_settings())
}

/// Surface whose level sets define `level` curves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LevelSurface {
    /// Posterior mean of the fitted surface.
    Posterior,
    /// A known synthetic surface.
    Truth(PatternOracle),
}

fn field_bounds(chains: &PosteriorChains, cfg: &RunConfig) -> ((f64, f64), (f64, f64)) {
    if let Some(b) = cfg.grid.bounds {
        return ((b[0], b[1]), (b[2], b[3]));
    }
    let (mut x, mut y) = ((f64::INFINITY, f64::NEG_INFINITY), (f64::INFINITY, f64::NEG_INFINITY));
    for s in &chains.locations {
        x = (x.0.min(s[0]), x.1.max(s[0]));
        y = (y.0.min(s[1]), y.1.max(s[1]));
    }
    (x, y)
}

pub fn level_field(chains: &PosteriorChains, cfg: &RunConfig, surface: LevelSurface) -> Result<ScalarGrid> {
    let (x, y) = field_bounds(chains, cfg);
    let n = cfg.wombling.level_resolution;
    match surface {
        LevelSurface::Posterior => posterior_mean_grid(chains, x, y, n, n, cfg.wombling.max_draws),
        LevelSurface::Truth(o) => Ok(ScalarGrid::from_fn(x, y, n, n, |s| o.value(s))),
    }
}

pub fn partition_for(doc: &CurveDoc, chains: &PosteriorChains, cfg: &RunConfig, surface: LevelSurface) -> Result<Partition> {
    let field = match doc.kind {
        CurveDocKind::Level => Some(level_field(chains, cfg, surface)?),
        _ => None,
    };
    let curve = doc.to_curve(field.as_ref(), Some(&chains.locations))?;
    realize(&curve, cfg.wombling.max_norm)
}

pub fn run_womble(
    chains: &PosteriorChains,
    doc: &CurveDoc,
    cfg: &RunConfig,
    surface: LevelSurface,
) -> Result<(Partition, WomblingResult)> {
    let partition = partition_for(doc, chains, cfg, surface)?;
    let result = sample_wombling(chains, &partition, &cfg.womble_settings())?;
    Ok((partition, result))
}

pub fn truth_for(oracle: &PatternOracle, partition: &Partition) -> WomblingTruth {
    true_wombling(oracle, partition, TRUTH_NODES)
}

/// Named curves for the synthetic surfaces on the unit square: level curves
/// around a trough (`curveA`), two peaks (`curveB`, `curveC`), and an open
/// Bézier through a flat band (`curveD`). Closed curves run clockwise.
pub fn builtin_curve(name: &str) -> Option<CurveDoc> {
    let level = |level: f64, near: [f64; 2]| CurveDoc {
        kind: CurveDocKind::Level,
        points: Vec::new(),
        closed: true,
        level: Some(level),
        resolution: None,
        orientation: Orientation::Clockwise,
        near: Some(near),
        clip_to_hull: false,
    };
    match name {
        "curveA" => Some(level(-18.0, [0.5, 1.0 / 3.0])),
        "curveB" => Some(level(18.0, [1.0 / 6.0, 2.0 / 3.0])),
        "curveC" => Some(level(15.0, [5.0 / 6.0, 2.0 / 3.0])),
        "curveD" => Some(CurveDoc {
            kind: CurveDocKind::Bezier,
            points: vec![[0.33, 0.15], [0.34, 0.5], [0.33, 0.85]],
            closed: false,
            level: None,
            // every evaluated point starts a segment; 1000 would make the joint
            // law needlessly large for a nearly straight curve
            resolution: Some(32),
            orientation: Orientation::AsGiven,
            near: None,
            clip_to_hull: false,
        }),
        _ => None,
    }
}

pub const BUILTIN_CURVES: [&str; 4] = ["curveA", "curveB", "curveC", "curveD"];
