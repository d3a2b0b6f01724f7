//! Cholesky factorisation with escalating diagonal jitter.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

/// Factor of a symmetric positive (semi)definite matrix plus the jitter that
/// was needed to obtain it.
#[derive(Debug, Clone)]
pub struct JitteredCholesky {
    pub chol: Cholesky<f64, Dyn>,
    pub jitter: f64,
}

impl JitteredCholesky {
    pub fn l(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    /// `L⁻¹ b`.
    pub fn solve_lower(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol
            .l_dirty()
            .solve_lower_triangular(b)
            .expect("Cholesky factor has a nonzero diagonal")
    }

    pub fn solve_lower_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol
            .l_dirty()
            .solve_lower_triangular(b)
            .expect("Cholesky factor has a nonzero diagonal")
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }
}

/// Tries a plain Cholesky first, then adds `ε·mean(diag)` to the diagonal with
/// `ε = 1e-10, 1e-9, …, 1e-4`.
pub fn cholesky_jittered(m: &DMatrix<f64>) -> Result<JitteredCholesky> {
    let n = m.nrows();
    if let Some(chol) = Cholesky::new(m.clone()) {
        return Ok(JitteredCholesky { chol, jitter: 0.0 });
    }
    let scale = (m.trace() / n.max(1) as f64).abs().max(f64::MIN_POSITIVE);
    let mut eps = JITTER_START;
    while eps <= JITTER_MAX * (1.0 + 1e-9) {
        let jitter = eps * scale;
        let mut a = m.clone();
        for i in 0..n {
            a[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(a) {
            return Ok(JitteredCholesky { chol, jitter });
        }
        eps *= 10.0;
    }
    Err(Error::SingularCovariance {
        size: n,
        jitter: JITTER_MAX * scale,
    })
}

/// Lower Cholesky factor of a positive semidefinite matrix, used for drawing
/// Gaussian vectors. Falls back to a symmetric eigendecomposition (clamping
/// negative eigenvalues) when even the jittered factorisation fails.
pub fn sampling_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    match cholesky_jittered(m) {
        Ok(c) => c.l(),
        Err(_) => {
            let sym = (m + m.transpose()) * 0.5;
            let eig = sym.symmetric_eigen();
            let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
            &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals)
        }
    }
}
