//! Matrices stored as `exp(log_scale) * body` so products spanning e^{±hundreds} never overflow.

use nalgebra::{DMatrix, DVector};

use crate::linalg::spectral_norm;

/// `exp(log_scale) * body` with `body` renormalized to unit spectral norm after every operation.
/// The zero matrix is stored with `log_scale = -inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledMatrix {
    body: DMatrix<f64>,
    log_scale: f64,
}

impl ScaledMatrix {
    /// Wraps a plain matrix.
    pub fn new(m: DMatrix<f64>) -> Self {
        Self::from_parts(m, 0.0)
    }

    /// Wraps `exp(log_scale) * body`, renormalizing the body.
    pub fn from_parts(body: DMatrix<f64>, log_scale: f64) -> Self {
        let mut s = ScaledMatrix { body, log_scale };
        s.normalize();
        s
    }

    pub fn identity(n: usize) -> Self {
        ScaledMatrix { body: DMatrix::identity(n, n), log_scale: 0.0 }
    }

    pub fn zeros(r: usize, c: usize) -> Self {
        ScaledMatrix { body: DMatrix::zeros(r, c), log_scale: f64::NEG_INFINITY }
    }

    fn normalize(&mut self) {
        let nrm = spectral_norm(&self.body);
        if nrm == 0.0 || !nrm.is_finite() || self.log_scale == f64::NEG_INFINITY {
            if nrm == 0.0 || self.log_scale == f64::NEG_INFINITY {
                self.body.fill(0.0);
                self.log_scale = f64::NEG_INFINITY;
            }
            return;
        }
        if nrm != 1.0 {
            self.body /= nrm;
            self.log_scale += libm::log(nrm);
        }
    }

    pub fn body(&self) -> &DMatrix<f64> {
        &self.body
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    pub fn nrows(&self) -> usize {
        self.body.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.body.ncols()
    }

    pub fn is_zero(&self) -> bool {
        self.log_scale == f64::NEG_INFINITY
    }

    /// `log ||self||_2`.
    pub fn log_norm(&self) -> f64 {
        if self.is_zero() {
            return f64::NEG_INFINITY;
        }
        self.log_scale + libm::log(spectral_norm(&self.body))
    }

    /// Materializes the matrix. Overflows to infinity for huge scales.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        if self.is_zero() {
            return self.body.clone();
        }
        &self.body * libm::exp(self.log_scale)
    }

    /// Adds `delta` to the log scale (multiplies by `exp(delta)`).
    pub fn scale_log(&self, delta: f64) -> Self {
        ScaledMatrix { body: self.body.clone(), log_scale: self.log_scale + delta }
    }

    pub fn mul(&self, rhs: &ScaledMatrix) -> Self {
        Self::from_parts(&self.body * &rhs.body, self.log_scale + rhs.log_scale)
    }

    /// `self * m` for a plain matrix `m`.
    pub fn mul_plain(&self, m: &DMatrix<f64>) -> Self {
        Self::from_parts(&self.body * m, self.log_scale)
    }

    /// `m * self` for a plain matrix `m`.
    pub fn plain_mul(&self, m: &DMatrix<f64>) -> Self {
        Self::from_parts(m * &self.body, self.log_scale)
    }

    /// `self * v`, returned with its own log scale.
    pub fn apply(&self, v: &DVector<f64>) -> (DVector<f64>, f64) {
        let w = &self.body * v;
        let n = w.norm();
        if n == 0.0 || self.is_zero() {
            return (w * 0.0, f64::NEG_INFINITY);
        }
        (w / n, self.log_scale + libm::log(n))
    }

    pub fn transpose(&self) -> Self {
        ScaledMatrix { body: self.body.transpose(), log_scale: self.log_scale }
    }

    /// Inverse via LU; `None` if singular.
    pub fn inverse(&self) -> Option<Self> {
        if self.is_zero() {
            return None;
        }
        let inv = crate::linalg::lu_inverse(&self.body)?;
        Some(Self::from_parts(inv, -self.log_scale))
    }

    /// Relative distance `||a - b|| / max(||a||, ||b||)` computed at a common scale.
    pub fn relative_distance(&self, other: &ScaledMatrix) -> f64 {
        if self.is_zero() && other.is_zero() {
            return 0.0;
        }
        let top = self.log_norm().max(other.log_norm());
        let a = &self.body * libm::exp(self.log_scale - top);
        let b = &other.body * libm::exp(other.log_scale - top);
        spectral_norm(&(a - b))
    }
}
