//! Point-referenced datasets.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const DUPLICATE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialDataset {
    pub locations: Vec<[f64; 2]>,
    /// `L×p` design matrix; the first column is the intercept.
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    /// Names of the non-intercept covariate columns.
    pub covariates: Vec<String>,
}

impl SpatialDataset {
    /// Builds a dataset, prepending an intercept column to `covariates`.
    pub fn new(locations: Vec<[f64; 2]>, y: Vec<f64>, covariates: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let n = locations.len();
        if y.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: y.len() });
        }
        let p = covariates.len() + 1;
        let mut x = DMatrix::from_element(n, p, 1.0);
        let mut names = Vec::with_capacity(covariates.len());
        for (j, (name, col)) in covariates.into_iter().enumerate() {
            if col.len() != n {
                return Err(Error::LengthMismatch { expected: n, got: col.len() });
            }
            for (i, v) in col.into_iter().enumerate() {
                x[(i, j + 1)] = v;
            }
            names.push(name);
        }
        let ds = SpatialDataset {
            locations,
            x,
            y: DVector::from_vec(y),
            covariates: names,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn n_covariates(&self) -> usize {
        self.x.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if n == 0 {
            return Err(Error::Config("dataset has no rows".into()));
        }
        if n < self.x.ncols() {
            return Err(Error::Config(format!(
                "dataset has {n} rows but {} design columns",
                self.x.ncols()
            )));
        }
        let finite = self.locations.iter().all(|s| s[0].is_finite() && s[1].is_finite())
            && self.x.iter().all(|v| v.is_finite())
            && self.y.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("dataset contains non-finite values".into()));
        }
        if let Some((first, second)) = find_duplicate(&self.locations) {
            return Err(Error::DuplicateLocation { first, second });
        }
        Ok(())
    }

    pub fn max_distance(&self) -> f64 {
        let mut best = 0.0f64;
        for (i, a) in self.locations.iter().enumerate() {
            for b in &self.locations[..i] {
                best = best.max(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt());
            }
        }
        best
    }
}

/// First pair of rows closer than `1e-12`, found by sorting on the first
/// coordinate.
fn find_duplicate(locations: &[[f64; 2]]) -> Option<(usize, usize)> {
    let mut order: Vec<usize> = (0..locations.len()).collect();
    order.sort_by(|&a, &b| locations[a][0].total_cmp(&locations[b][0]));
    let mut found: Option<(usize, usize)> = None;
    for (k, &i) in order.iter().enumerate() {
        for &j in &order[k + 1..] {
            if locations[j][0] - locations[i][0] > DUPLICATE_TOL {
                break;
            }
            if (locations[j][1] - locations[i][1]).abs() <= DUPLICATE_TOL {
                let pair = (i.min(j), i.max(j));
                if found.is_none_or(|f| pair < f) {
                    found = Some(pair);
                }
            }
        }
    }
    found
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intercept_is_prepended() {
        let ds = SpatialDataset::new(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![1.0, 2.0, 3.0],
            vec![("elev".into(), vec![5.0, 6.0, 7.0])],
        )
        .unwrap();
        assert_eq!(ds.x.ncols(), 2);
        assert_eq!(ds.x[(1, 0)], 1.0);
        assert_eq!(ds.x[(1, 1)], 6.0);
        assert!((ds.max_distance() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rejects_duplicates() {
        let err = SpatialDataset::new(vec![[0.0, 0.0], [0.5, 0.5], [0.0, 0.0]], vec![1.0, 2.0, 3.0], vec![]);
        assert!(matches!(err, Err(Error::DuplicateLocation { first: 0, second: 2 })));
    }

    #[test]
    fn rejects_length_mismatch() {
        assert!(matches!(
            SpatialDataset::new(vec![[0.0, 0.0]], vec![1.0, 2.0], vec![]),
            Err(Error::LengthMismatch { .. })
        ));
    }
}
