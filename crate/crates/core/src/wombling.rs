//! Wombling measures: line integrals of the normal gradient and normal
//! curvature of a surface along a partitioned curve.
//!
//! For a segment with start `s₀`, unit tangent `u`, normal `n` and length `t`:
//!
//! ```text
//! Γ⁽¹⁾ = ∫₀ᵗ nᵀ∇Z(s₀ + τu) dτ        Γ⁽²⁾ = ∫₀ᵗ nᵀ∇²Z(s₀ + τu) n dτ
//! ```
//!
//! Given the latent surface at the data, `Γ | Z ~ N(γᵀΣ⁻¹Z, K_Γ − γᵀΣ⁻¹γ)`
//! where `γ` holds `Cov(Z(sⱼ), Γ)` and `K_Γ` the prior covariance of the
//! measures.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curves::{Partition, Segment};
use crate::differential::{draw_rng, DifferentialDraw};
use crate::error::{Error, Result};
use crate::kernels::{functional_cov_with, Functional, KernelFamily, KernelSpec};
use crate::linalg::{cholesky_jittered, sampling_factor};
use crate::mcmc::PosteriorChains;
use crate::quadrature::{integrate_triangle, tensor_side, GaussLegendre};
use crate::simulate::Surface;
use crate::summary::{summarize, Summary};

fn gradient_functional(n: Vector2<f64>) -> Functional {
    Functional::Gradient(n)
}

fn curvature_functional(n: Vector2<f64>) -> Functional {
    Functional::Curvature(n, n)
}

fn measure_functionals(seg: &Segment) -> [Functional; 2] {
    [gradient_functional(seg.normal), curvature_functional(seg.normal)]
}

/// `(Cov(Γ⁽¹⁾, Z(sⱼ)), Cov(Γ⁽²⁾, Z(sⱼ)))` by Gauss–Legendre quadrature.
pub fn segment_cross_cov(spec: &KernelSpec, seg: &Segment, s_j: [f64; 2], n_quad_1d: usize) -> Result<Vector2<f64>> {
    spec.family.require_curvature()?;
    let rule = GaussLegendre::new(n_quad_1d.max(1));
    Ok(cross_cov_with_rule(spec, seg, s_j, &rule))
}

fn cross_cov_with_rule(spec: &KernelSpec, seg: &Segment, s_j: [f64; 2], rule: &GaussLegendre) -> Vector2<f64> {
    let f = measure_functionals(seg);
    let mut out = Vector2::zeros();
    for (t, w) in rule.on_interval(seg.length) {
        let p = seg.point_at(t);
        let delta = Vector2::new(p[0] - s_j[0], p[1] - s_j[1]);
        let c = spec.coeffs(delta.norm());
        out[0] += w * functional_cov_with(&c, &delta, &f[0], &Functional::Value);
        out[1] += w * functional_cov_with(&c, &delta, &f[1], &Functional::Value);
    }
    out
}

/// `Φ(hi) − Φ(lo)` evaluated in whichever tail keeps precision.
fn normal_cdf_diff(hi: f64, lo: f64) -> f64 {
    use libm::erfc;
    let sf = |x: f64| 0.5 * erfc(x / std::f64::consts::SQRT_2);
    if lo >= 0.0 {
        sf(lo) - sf(hi)
    } else if hi <= 0.0 {
        sf(-hi) - sf(-lo)
    } else {
        1.0 - sf(hi) - sf(-lo)
    }
}

/// Closed form of [`segment_cross_cov`] for the squared exponential kernel.
pub fn analytic_cross_cov_sqexp(spec: &KernelSpec, seg: &Segment, s_j: [f64; 2]) -> Result<Vector2<f64>> {
    if spec.family != KernelFamily::SquaredExponential {
        return Err(Error::WrongFamily(spec.family.name()));
    }
    let (s2, phi) = (spec.sigma2, spec.phi);
    let delta = Vector2::new(seg.start[0] - s_j[0], seg.start[1] - s_j[1]);
    let a = seg.normal.dot(&delta);
    let b = seg.direction.dot(&delta);
    let k = (2.0 * phi).sqrt();
    let dphi = normal_cdf_diff(k * (b + seg.length), k * b);
    let c1 = -2.0 * s2 * (std::f64::consts::PI * phi).sqrt() * (-phi * a * a).exp();
    Ok(Vector2::new(c1 * a * dphi, c1 * (1.0 - 2.0 * phi * a * a) * dphi))
}

/// `Cov((Γ⁽¹⁾, Γ⁽²⁾)(A), (Γ⁽¹⁾, Γ⁽²⁾)(B))` by a tensor Gauss–Legendre rule
/// with `n_quad_2d` nodes. When `A` and `B` are the same segment the square is
/// split along its diagonal, where the Matérn integrand has a kink, and each
/// triangle gets its own collapsed rule.
pub fn segment_womb_cov(spec: &KernelSpec, seg_a: &Segment, seg_b: &Segment, n_quad_2d: usize) -> Result<Matrix2<f64>> {
    spec.family.require_curvature()?;
    let rule = GaussLegendre::new(tensor_side(n_quad_2d)?);
    Ok(womb_block(spec, seg_a, seg_b, &rule))
}

fn womb_block(spec: &KernelSpec, a: &Segment, b: &Segment, rule: &GaussLegendre) -> Matrix2<f64> {
    let fa = measure_functionals(a);
    let fb = measure_functionals(b);
    let integrand = |t1: f64, t2: f64| -> Matrix2<f64> {
        let p = a.point_at(t1);
        let q = b.point_at(t2);
        let delta = Vector2::new(p[0] - q[0], p[1] - q[1]);
        let c = spec.coeffs(delta.norm());
        Matrix2::from_fn(|i, j| functional_cov_with(&c, &delta, &fa[i], &fb[j]))
    };
    if a == b {
        let t = a.length;
        let mut acc = Matrix2::zeros();
        // Accumulate each entry separately through the scalar triangle rule.
        for (lo, mid, hi) in [([0.0, 0.0], [t, 0.0], [t, t]), ([0.0, 0.0], [t, t], [0.0, t])] {
            for i in 0..2 {
                for j in 0..2 {
                    acc[(i, j)] += integrate_triangle(rule, lo, mid, hi, |t1, t2| integrand(t1, t2)[(i, j)]);
                }
            }
        }
        acc
    } else {
        let mut acc = Matrix2::zeros();
        for (t1, w1) in rule.on_interval(a.length) {
            for (t2, w2) in rule.on_interval(b.length) {
                acc += integrand(t1, t2) * (w1 * w2);
            }
        }
        acc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WombMode {
    /// Segments sampled jointly, including cross-segment covariances.
    #[default]
    Joint,
    /// Segments treated as independent (approximate curve-level aggregates).
    Fast,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WomblingSettings {
    pub n_quad_1d: usize,
    pub n_quad_2d: usize,
    pub alpha: f64,
    pub mode: WombMode,
    pub max_draws: Option<usize>,
    pub seed: u64,
    /// Use the closed-form data cross-covariances for the squared exponential.
    pub analytic: bool,
}

impl Default for WomblingSettings {
    fn default() -> Self {
        WomblingSettings {
            n_quad_1d: 10,
            n_quad_2d: 100,
            alpha: 0.05,
            mode: WombMode::Joint,
            max_draws: None,
            seed: 0,
            analytic: false,
        }
    }
}

impl WomblingSettings {
    pub fn validate(&self) -> Result<()> {
        if self.n_quad_1d == 0 {
            return Err(Error::Config("n_quad_1d must be positive".into()));
        }
        tensor_side(self.n_quad_2d)?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureSummary {
    pub gradient: Summary,
    pub curvature: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSummary {
    pub index: usize,
    pub start: [f64; 2],
    pub end: [f64; 2],
    pub length: f64,
    pub total: MeasureSummary,
    pub average: MeasureSummary,
    /// Some draws produced non-finite values; summaries use the finite ones.
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub length: f64,
    pub total: MeasureSummary,
    pub average: MeasureSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WomblingResult {
    pub alpha: f64,
    pub mode: WombMode,
    pub segments: Vec<SegmentSummary>,
    pub curve: CurveSummary,
    /// `totals[draw][segment] = (Γ⁽¹⁾, Γ⁽²⁾)`.
    #[serde(skip)]
    pub totals: Vec<Vec<[f64; 2]>>,
}

fn summarize_finite(values: &[f64], prob: f64) -> (Summary, bool) {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let failed = finite.len() != values.len();
    match summarize(&finite, prob) {
        Ok(s) => (s, failed),
        Err(_) => (
            Summary {
                median: f64::NAN,
                lower: f64::NAN,
                upper: f64::NAN,
                flag: crate::summary::Significance::None,
            },
            true,
        ),
    }
}

fn measure_summary(g: &[f64], c: &[f64], prob: f64) -> (MeasureSummary, bool) {
    let (gradient, f1) = summarize_finite(g, prob);
    let (curvature, f2) = summarize_finite(c, prob);
    (MeasureSummary { gradient, curvature }, f1 || f2)
}

/// Summaries of per-draw segment totals. Averages divide each draw by the
/// segment length; the curve average divides the summed totals by the curve
/// length.
pub fn summarize_totals(totals: Vec<Vec<[f64; 2]>>, partition: &Partition, alpha: f64, mode: WombMode) -> Result<WomblingResult> {
    if totals.is_empty() {
        return Err(Error::EmptySamples);
    }
    let prob = 1.0 - alpha;
    let n_seg = partition.segments.len();
    for row in &totals {
        if row.len() != n_seg {
            return Err(Error::LengthMismatch { expected: n_seg, got: row.len() });
        }
    }
    let segments = partition
        .segments
        .iter()
        .enumerate()
        .map(|(i, seg)| {
            let g: Vec<f64> = totals.iter().map(|d| d[i][0]).collect();
            let c: Vec<f64> = totals.iter().map(|d| d[i][1]).collect();
            let ga: Vec<f64> = g.iter().map(|v| v / seg.length).collect();
            let ca: Vec<f64> = c.iter().map(|v| v / seg.length).collect();
            let (total, f1) = measure_summary(&g, &c, prob);
            let (average, f2) = measure_summary(&ga, &ca, prob);
            SegmentSummary {
                index: i,
                start: seg.start,
                end: seg.end,
                length: seg.length,
                total,
                average,
                failed: f1 || f2,
            }
        })
        .collect();
    let length = partition.total_length;
    let cg: Vec<f64> = totals.iter().map(|d| d.iter().map(|v| v[0]).sum()).collect();
    let cc: Vec<f64> = totals.iter().map(|d| d.iter().map(|v| v[1]).sum()).collect();
    let cga: Vec<f64> = cg.iter().map(|v| v / length).collect();
    let cca: Vec<f64> = cc.iter().map(|v| v / length).collect();
    let curve = CurveSummary {
        length,
        total: measure_summary(&cg, &cc, prob).0,
        average: measure_summary(&cga, &cca, prob).0,
    };
    Ok(WomblingResult {
        alpha,
        mode,
        segments,
        curve,
        totals,
    })
}

/// Conditional law of all segment measures given the latent surface `z` at
/// `locations`: mean and covariance over `(Γ⁽¹⁾₁, Γ⁽²⁾₁, Γ⁽¹⁾₂, …)`. In fast mode
/// cross-segment blocks are left at zero.
pub fn conditional_womb_law(
    spec: &KernelSpec,
    locations: &[[f64; 2]],
    z: &[f64],
    partition: &Partition,
    settings: &WomblingSettings,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    spec.family.require_curvature()?;
    settings.validate()?;
    let n = locations.len();
    if z.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: z.len() });
    }
    let segs = &partition.segments;
    let m = 2 * segs.len();
    let rule1 = GaussLegendre::new(settings.n_quad_1d);
    let rule2 = GaussLegendre::new(tensor_side(settings.n_quad_2d)?);
    let use_analytic = settings.analytic && spec.family == KernelFamily::SquaredExponential;

    let mut gamma = DMatrix::zeros(n, m);
    for (j, s) in locations.iter().enumerate() {
        for (i, seg) in segs.iter().enumerate() {
            let g = if use_analytic {
                analytic_cross_cov_sqexp(spec, seg, *s)?
            } else {
                cross_cov_with_rule(spec, seg, *s, &rule1)
            };
            gamma[(j, 2 * i)] = g[0];
            gamma[(j, 2 * i + 1)] = g[1];
        }
    }

    let mut k = DMatrix::zeros(m, m);
    for a in 0..segs.len() {
        let b_range = match settings.mode {
            WombMode::Joint => 0..=a,
            WombMode::Fast => a..=a,
        };
        for b in b_range {
            let blk = womb_block(spec, &segs[a], &segs[b], &rule2);
            for i in 0..2 {
                for j in 0..2 {
                    k[(2 * a + i, 2 * b + j)] = blk[(i, j)];
                    k[(2 * b + j, 2 * a + i)] = blk[(i, j)];
                }
            }
        }
    }

    let chol = cholesky_jittered(&crate::kernels::gram_matrix(spec, locations))?;
    let w = chol.solve_lower(&gamma);
    let zl = chol.solve_lower_vec(&DVector::from_column_slice(z));
    let mean = w.transpose() * zl;
    let reduction = w.transpose() * &w;
    let mut cov = k;
    for a in 0..m {
        for b in 0..m {
            let same_segment = a / 2 == b / 2;
            if settings.mode == WombMode::Joint || same_segment {
                cov[(a, b)] -= 0.5 * (reduction[(a, b)] + reduction[(b, a)]);
            }
        }
    }
    Ok((mean, cov))
}

fn draw_gaussian<R: rand::Rng>(mean: &DVector<f64>, cov: &DMatrix<f64>, mode: WombMode, rng: &mut R) -> DVector<f64> {
    let m = mean.len();
    let xi = DVector::from_fn(m, |_, _| StandardNormal.sample(rng));
    match mode {
        WombMode::Joint => mean + sampling_factor(cov) * xi,
        WombMode::Fast => {
            let mut out = mean.clone();
            for s in 0..m / 2 {
                let blk = cov.view((2 * s, 2 * s), (2, 2)).into_owned();
                let l = sampling_factor(&blk);
                let e = l * xi.rows(2 * s, 2);
                out[2 * s] += e[0];
                out[2 * s + 1] += e[1];
            }
            out
        }
    }
}

/// For every retained draw (or an even subsample), one joint draw of the
/// segment measures from their conditional law.
pub fn sample_wombling(chains: &PosteriorChains, partition: &Partition, settings: &WomblingSettings) -> Result<WomblingResult> {
    chains.family.require_curvature()?;
    settings.validate()?;
    if chains.draws.is_empty() {
        return Err(Error::EmptySamples);
    }
    let totals = chains
        .subsample(settings.max_draws)
        .into_par_iter()
        .map(|idx| {
            let draw = &chains.draws[idx];
            let spec = chains.kernel(draw)?;
            let (mean, cov) = conditional_womb_law(&spec, &chains.locations, &draw.z, partition, settings)?;
            let mut rng = draw_rng(settings.seed, idx);
            let x = draw_gaussian(&mean, &cov, settings.mode, &mut rng);
            Ok((0..partition.segments.len()).map(|i| [x[2 * i], x[2 * i + 1]]).collect())
        })
        .collect::<Result<Vec<Vec<[f64; 2]>>>>()?;
    summarize_totals(totals, partition, settings.alpha, settings.mode)
}

/// Exact measures of a deterministic surface along a partition.
#[derive(Debug, Clone, PartialEq)]
pub struct WomblingTruth {
    pub segment_totals: Vec<Vector2<f64>>,
    pub segment_averages: Vec<Vector2<f64>>,
    pub curve_total: Vector2<f64>,
    pub curve_average: Vector2<f64>,
}

pub const TRUTH_NODES: usize = 40;

pub fn true_wombling(surface: &dyn Surface, partition: &Partition, n_nodes: usize) -> WomblingTruth {
    let rule = GaussLegendre::new(n_nodes.max(1));
    let segment_totals: Vec<Vector2<f64>> = partition
        .segments
        .iter()
        .map(|seg| {
            let n = seg.normal;
            let mut acc = Vector2::zeros();
            for (t, w) in rule.on_interval(seg.length) {
                let p = seg.point_at(t);
                let g = surface.grad(p);
                let h = surface.hess(p);
                acc[0] += w * n.dot(&g);
                acc[1] += w * (h[0] * n[0] * n[0] + 2.0 * h[1] * n[0] * n[1] + h[2] * n[1] * n[1]);
            }
            acc
        })
        .collect();
    let segment_averages = segment_totals
        .iter()
        .zip(&partition.segments)
        .map(|(t, s)| t / s.length)
        .collect();
    let curve_total: Vector2<f64> = segment_totals.iter().sum();
    WomblingTruth {
        segment_totals,
        segment_averages,
        curve_average: curve_total / partition.total_length,
        curve_total,
    }
}

/// Left-endpoint Riemann totals `tᵢ (nᵀ∇Y(sᵢ), nᵀ∇²Y(sᵢ)n)` for one
/// realisation, with `draws[i]` taken at the start of segment `i`.
pub fn riemann_totals(draws: &[DifferentialDraw], partition: &Partition) -> Result<Vec<[f64; 2]>> {
    if draws.len() != partition.segments.len() {
        return Err(Error::LengthMismatch {
            expected: partition.segments.len(),
            got: draws.len(),
        });
    }
    Ok(draws
        .iter()
        .zip(&partition.segments)
        .map(|(d, seg)| {
            let n = seg.normal;
            let h = d.hess_vech;
            let curv = h[0] * n[0] * n[0] + 2.0 * h[1] * n[0] * n[1] + h[2] * n[1] * n[1];
            [seg.length * n.dot(&d.grad), seg.length * curv]
        })
        .collect())
}

/// Riemann-sum wombling from differential draws: `draws[k][i]` is the `k`-th
/// posterior draw at the start of segment `i`.
pub fn riemann_wombling(draws: &[Vec<DifferentialDraw>], partition: &Partition, alpha: f64) -> Result<WomblingResult> {
    let totals = draws
        .iter()
        .map(|d| riemann_totals(d, partition))
        .collect::<Result<Vec<_>>>()?;
    summarize_totals(totals, partition, alpha, WombMode::Joint)
}

/// Joint posterior draws of the differential process at the segment starts,
/// one realisation per retained MCMC draw, for use with [`riemann_wombling`].
pub fn sample_segment_start_differentials(
    chains: &PosteriorChains,
    partition: &Partition,
    max_draws: Option<usize>,
    seed: u64,
) -> Result<Vec<Vec<DifferentialDraw>>> {
    chains.family.require_curvature()?;
    let starts: Vec<[f64; 2]> = partition.segments.iter().map(|s| s.start).collect();
    chains
        .subsample(max_draws)
        .into_par_iter()
        .map(|idx| {
            let draw = &chains.draws[idx];
            let spec = chains.kernel(draw)?;
            let mut rng = draw_rng(seed, idx);
            joint_point_differentials(&spec, &chains.locations, &draw.z, &starts, &mut rng)
        })
        .collect()
}

/// One joint draw of `(∇Z, vech ∇²Z)` at every target given `z` at `locations`.
pub fn joint_point_differentials<R: rand::Rng>(
    spec: &KernelSpec,
    locations: &[[f64; 2]],
    z: &[f64],
    targets: &[[f64; 2]],
    rng: &mut R,
) -> Result<Vec<DifferentialDraw>> {
    let (e1, e2) = (Vector2::x(), Vector2::y());
    let fs = [
        Functional::Gradient(e1),
        Functional::Gradient(e2),
        Functional::Curvature(e1, e1),
        Functional::Curvature(e1, e2),
        Functional::Curvature(e2, e2),
    ];
    let n = locations.len();
    let m = 5 * targets.len();
    let mut c = DMatrix::zeros(n, m);
    for (j, s) in locations.iter().enumerate() {
        for (p, t) in targets.iter().enumerate() {
            let delta = Vector2::new(s[0] - t[0], s[1] - t[1]);
            let co = spec.coeffs(delta.norm());
            for (a, f) in fs.iter().enumerate() {
                c[(j, 5 * p + a)] = functional_cov_with(&co, &delta, &Functional::Value, f);
            }
        }
    }
    let mut prior = DMatrix::zeros(m, m);
    for p in 0..targets.len() {
        for q in 0..=p {
            let delta = Vector2::new(targets[p][0] - targets[q][0], targets[p][1] - targets[q][1]);
            let co = spec.coeffs(delta.norm());
            for a in 0..5 {
                for b in 0..5 {
                    let v = functional_cov_with(&co, &delta, &fs[a], &fs[b]);
                    prior[(5 * p + a, 5 * q + b)] = v;
                    prior[(5 * q + b, 5 * p + a)] = v;
                }
            }
        }
    }
    let chol = cholesky_jittered(&crate::kernels::gram_matrix(spec, locations))?;
    let w = chol.solve_lower(&c);
    let mean = w.transpose() * chol.solve_lower_vec(&DVector::from_column_slice(z));
    let cov = prior - w.transpose() * &w;
    let cov = (&cov + cov.transpose()) * 0.5;
    let x = mean + sampling_factor(&cov) * DVector::from_fn(m, |_, _| StandardNormal.sample(rng));
    Ok(targets
        .iter()
        .enumerate()
        .map(|(p, t)| {
            DifferentialDraw::from_vector(*t, &crate::differential::Vector5::from_iterator(x.rows(5 * p, 5).iter().copied()))
        })
        .collect())
}

/// Deterministic Riemann totals of a known surface.
pub fn riemann_truth(surface: &dyn Surface, partition: &Partition) -> Vector2<f64> {
    let draws: Vec<DifferentialDraw> = partition
        .segments
        .iter()
        .map(|s| DifferentialDraw {
            location: s.start,
            grad: surface.grad(s.start),
            hess_vech: surface.hess(s.start),
        })
        .collect();
    riemann_totals(&draws, partition)
        .expect("one draw per segment")
        .iter()
        .fold(Vector2::zeros(), |acc, v| acc + Vector2::new(v[0], v[1]))
}

/// `Σᵢ ∫ uᵢᵀ∇²μ uᵢ dτ`, the tangential curvature accumulated along the curve.
/// On a single straight segment it equals the change of `uᵀ∇μ` between the
/// endpoints.
pub fn tangential_curvature_total(surface: &dyn Surface, partition: &Partition, n_nodes: usize) -> f64 {
    let rule = GaussLegendre::new(n_nodes);
    partition
        .segments
        .iter()
        .map(|seg| {
            let u = seg.direction;
            rule.on_interval(seg.length)
                .map(|(t, w)| {
                    let h = surface.hess(seg.point_at(t));
                    w * (h[0] * u[0] * u[0] + 2.0 * h[1] * u[0] * u[1] + h[2] * u[1] * u[1])
                })
                .sum::<f64>()
        })
        .sum()
}

/// `Σᵢ ∫ wᵀ∇²μ uᵢ dτ` for a fixed direction `w`: the line integral of the
/// exact differential `d(wᵀ∇μ)`, which vanishes around any closed curve.
pub fn fixed_direction_hessian_circulation(surface: &dyn Surface, partition: &Partition, w: Vector2<f64>, n_nodes: usize) -> f64 {
    let rule = GaussLegendre::new(n_nodes);
    partition
        .segments
        .iter()
        .map(|seg| {
            let c = crate::kernels::duplication_contraction(&w, &seg.direction);
            rule.on_interval(seg.length)
                .map(|(t, wt)| wt * c.dot(&surface.hess(seg.point_at(t))))
                .sum::<f64>()
        })
        .sum()
}

/// Boundary flux `∮ wᵀ∇²μ n dℓ` of the field `∇²μ w`.
pub fn hessian_flux_boundary(surface: &dyn Surface, partition: &Partition, w: Vector2<f64>, n_nodes: usize) -> f64 {
    let rule = GaussLegendre::new(n_nodes);
    partition
        .segments
        .iter()
        .map(|seg| {
            let c = crate::kernels::duplication_contraction(&w, &seg.normal);
            rule.on_interval(seg.length)
                .map(|(t, wt)| wt * c.dot(&surface.hess(seg.point_at(t))))
                .sum::<f64>()
        })
        .sum()
}

/// Region integral `∬ div(∇²μ w) dA = ∬ w₁(μ₁₁₁+μ₁₂₂) + w₂(μ₁₁₂+μ₂₂₂) dA`
/// over a simple polygon, by a signed triangle fan from the first vertex.
pub fn hessian_flux_region(surface: &dyn Surface, polygon: &[[f64; 2]], w: Vector2<f64>, n_nodes: usize) -> f64 {
    let rule = GaussLegendre::new(n_nodes);
    let mut pts = polygon.to_vec();
    if pts.len() > 1 && pts.first() == pts.last() {
        pts.pop();
    }
    let orientation = crate::curves::signed_area2(&pts).signum();
    let f = |x: f64, y: f64| {
        let t = surface.third([x, y]);
        w[0] * (t[0] + t[2]) + w[1] * (t[1] + t[3])
    };
    let a = pts[0];
    let mut total = 0.0;
    for k in 1..pts.len().saturating_sub(1) {
        let (b, c) = (pts[k], pts[k + 1]);
        let sign = ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])).signum();
        total += sign * integrate_triangle(&rule, a, b, c, f);
    }
    total * orientation
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::{realize, Curve};
    use crate::simulate::{Pattern, PatternOracle};

    fn sqexp() -> KernelSpec {
        KernelSpec::new(KernelFamily::SquaredExponential, 1.0, 1.0).unwrap()
    }

    fn unit_segment() -> Segment {
        Segment::new([0.0, 0.0], [1.0, 0.0]).unwrap()
    }

    #[test]
    fn analytic_matches_quadrature_example() {
        let seg = unit_segment();
        let q = segment_cross_cov(&sqexp(), &seg, [0.5, 0.5], 10).unwrap();
        let a = analytic_cross_cov_sqexp(&sqexp(), &seg, [0.5, 0.5]).unwrap();
        assert!((q - a).abs().max() < 1e-6, "{q} vs {a}");
        let fine = segment_cross_cov(&sqexp(), &seg, [0.5, 0.5], 1000).unwrap();
        assert!((fine - a).abs().max() < 1e-8);
    }

    #[test]
    fn analytic_degenerate_cases() {
        // datum on the segment's line: the normal-gradient term vanishes
        let a = analytic_cross_cov_sqexp(&sqexp(), &unit_segment(), [2.0, 0.0]).unwrap();
        assert_eq!(a[0], 0.0);
        let tiny = Segment::new([0.0, 0.0], [1e-10, 0.0]).unwrap();
        assert!(analytic_cross_cov_sqexp(&sqexp(), &tiny, [0.3, 0.4]).unwrap().norm() < 1e-9);
        let far = segment_cross_cov(&sqexp(), &unit_segment(), [100.0, 100.0], 10).unwrap();
        assert!(far.norm() < 1e-12);
        let m = KernelSpec::new(KernelFamily::Matern52, 1.0, 1.0).unwrap();
        assert!(matches!(analytic_cross_cov_sqexp(&m, &unit_segment(), [0.0, 1.0]), Err(Error::WrongFamily(_))));
    }

    #[test]
    fn womb_cov_variances_are_positive() {
        let k = segment_womb_cov(&sqexp(), &unit_segment(), &unit_segment(), 100).unwrap();
        assert!(k[(0, 0)] > 0.0 && k[(1, 1)] > 0.0);
        assert!((k[(0, 1)] - k[(1, 0)]).abs() < 1e-12);
        let tiny = Segment::new([0.0, 0.0], [1e-6, 0.0]).unwrap();
        assert!(segment_womb_cov(&sqexp(), &tiny, &tiny, 100).unwrap().abs().max() < 1e-10);
        assert!(segment_womb_cov(&sqexp(), &unit_segment(), &unit_segment(), 50).is_err());
    }

    #[test]
    fn pattern_one_truth_along_axis() {
        let p = realize(&Curve::polyline(vec![[0.0, 0.0], [1.0, 0.0]]), 1.0).unwrap();
        let truth = true_wombling(&PatternOracle::new(Pattern::One), &p, 60);
        assert!(truth.curve_average[0].abs() < 1e-9);
        assert!((truth.curve_average[1] + 90.0 * std::f64::consts::PI.powi(2)).abs() < 1e-9);
    }

    #[test]
    fn cdf_difference_in_tails() {
        let v = normal_cdf_diff(9.0, 8.0);
        assert!((v / 6.21983198586583e-16 - 1.0).abs() < 1e-9, "{v:e}");
        let v = normal_cdf_diff(1.0, -1.0);
        assert!((v - 0.6826894921370859).abs() < 1e-12, "{v}");
    }
}
