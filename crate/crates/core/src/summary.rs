//! Empirical HPD intervals, medians, significance flags and study metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HpdInterval {
    pub lower: f64,
    pub upper: f64,
    pub prob: f64,
}

impl HpdInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

fn sorted(samples: &[f64]) -> Vec<f64> {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Number of order statistics in a `prob` window over `n` samples.
fn window_len(n: usize, prob: f64) -> usize {
    ((prob * n as f64 - 1e-9).ceil() as usize).clamp(1, n)
}

fn hpd_sorted(s: &[f64], prob: f64) -> HpdInterval {
    let n = s.len();
    let k = window_len(n, prob);
    let mut best = 0;
    let mut best_width = f64::INFINITY;
    for i in 0..=n - k {
        let w = s[i + k - 1] - s[i];
        if w < best_width {
            best_width = w;
            best = i;
        }
    }
    HpdInterval {
        lower: s[best],
        upper: s[best + k - 1],
        prob,
    }
}

/// Shortest window of `⌈prob·n⌉` consecutive order statistics; ties go to the
/// window with the smallest lower endpoint.
pub fn hpd(samples: &[f64], prob: f64) -> Result<HpdInterval> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::Config(format!("HPD probability must lie in (0, 1), got {prob}")));
    }
    Ok(hpd_sorted(&sorted(samples), prob))
}

fn median_sorted(s: &[f64]) -> f64 {
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

pub fn median(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    Ok(median_sorted(&sorted(samples)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Significance {
    Positive,
    Negative,
    None,
}

impl Significance {
    pub fn from_interval(lower: f64, upper: f64) -> Self {
        if lower > 0.0 {
            Significance::Positive
        } else if upper < 0.0 {
            Significance::Negative
        } else {
            Significance::None
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Significance::Positive => "positive",
            Significance::Negative => "negative",
            Significance::None => "none",
        }
    }
}

impl std::str::FromStr for Significance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "positive" => Ok(Significance::Positive),
            "negative" => Ok(Significance::Negative),
            "none" => Ok(Significance::None),
            other => Err(Error::Config(format!("unknown significance flag `{other}`"))),
        }
    }
}

/// Median, HPD bounds and significance of one scalar quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
    pub flag: Significance,
}

impl Summary {
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

/// Summarises draws at HPD level `prob`. For strongly skewed or bimodal draws
/// the median can fall outside the HPD window; the interval is then widened to
/// reach it so that `lower ≤ median ≤ upper` always holds.
pub fn summarize(samples: &[f64], prob: f64) -> Result<Summary> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::Config(format!("HPD probability must lie in (0, 1), got {prob}")));
    }
    let s = sorted(samples);
    let med = median_sorted(&s);
    let h = hpd_sorted(&s, prob);
    let lower = h.lower.min(med);
    let upper = h.upper.max(med);
    Ok(Summary {
        median: med,
        lower,
        upper,
        flag: Significance::from_interval(lower, upper),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyMetrics {
    pub rmse: Vec<f64>,
    pub coverage: Vec<f64>,
}

/// RMSE of posterior medians and HPD coverage of the truth, per field.
/// `estimates[loc][field]` pairs with `truths[loc][field]`.
pub fn coverage_and_rmse(estimates: &[Vec<Summary>], truths: &[Vec<f64>]) -> Result<StudyMetrics> {
    if estimates.len() != truths.len() {
        return Err(Error::LengthMismatch {
            expected: estimates.len(),
            got: truths.len(),
        });
    }
    if estimates.is_empty() {
        return Err(Error::EmptySamples);
    }
    let n_fields = estimates[0].len();
    let mut sq = vec![0.0; n_fields];
    let mut hits = vec![0usize; n_fields];
    for (est, truth) in estimates.iter().zip(truths) {
        for row in [est.len(), truth.len()] {
            if row != n_fields {
                return Err(Error::LengthMismatch { expected: n_fields, got: row });
            }
        }
        for f in 0..n_fields {
            sq[f] += (est[f].median - truth[f]).powi(2);
            if est[f].contains(truth[f]) {
                hits[f] += 1;
            }
        }
    }
    let n = estimates.len() as f64;
    Ok(StudyMetrics {
        rmse: sq.iter().map(|s| (s / n).sqrt()).collect(),
        coverage: hits.iter().map(|&h| h as f64 / n).collect(),
    })
}
