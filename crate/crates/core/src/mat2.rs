//! Small dense 2x2 matrix used for diffusion coefficients and Jacobians.

use serde::{Deserialize, Serialize};

/// Row-major 2x2 matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat2(pub [[f64; 2]; 2]);

impl Mat2 {
    pub const ZERO: Mat2 = Mat2([[0.0; 2]; 2]);
    pub const IDENTITY: Mat2 = Mat2([[1.0, 0.0], [0.0, 1.0]]);

    /// Matrix from two rows.
    pub fn from_rows(r0: [f64; 2], r1: [f64; 2]) -> Self {
        Mat2([r0, r1])
    }

    pub fn row(&self, i: usize) -> [f64; 2] {
        self.0[i]
    }

    pub fn col(&self, j: usize) -> [f64; 2] {
        [self.0[0][j], self.0[1][j]]
    }

    pub fn det(&self) -> f64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn transpose(&self) -> Mat2 {
        Mat2([
            [self.0[0][0], self.0[1][0]],
            [self.0[0][1], self.0[1][1]],
        ])
    }

    pub fn mul(&self, other: &Mat2) -> Mat2 {
        let a = &self.0;
        let b = &other.0;
        Mat2([
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ])
    }

    pub fn mul_vec(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.0[0][0] * v[0] + self.0[0][1] * v[1],
            self.0[1][0] * v[0] + self.0[1][1] * v[1],
        ]
    }

    /// `sigma * sigma^T`.
    pub fn gram(&self) -> Mat2 {
        self.mul(&self.transpose())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Inverse, or `None` when the determinant vanishes.
    pub fn inverse(&self) -> Option<Mat2> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        Some(Mat2([
            [self.0[1][1] / d, -self.0[0][1] / d],
            [-self.0[1][0] / d, self.0[0][0] / d],
        ]))
    }

    /// Solves `x^T M = r^T` by Cramer's rule; `None` when `det M == 0`.
    ///
    /// Row systems of this shape appear when matching a stochastic integrand
    /// against the two traded assets. Cramer's rule keeps the exact unit
    /// solutions exact: when `r` equals a row of `M` the corresponding
    /// component comes out as a quotient of identical determinants.
    pub fn solve_left(&self, r: [f64; 2]) -> Option<[f64; 2]> {
        // x^T M = r^T is M^T x = r.
        let mt = self.transpose();
        let d = mt.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        let d0 = Mat2([[r[0], mt.0[0][1]], [r[1], mt.0[1][1]]]).det();
        let d1 = Mat2([[mt.0[0][0], r[0]], [mt.0[1][0], r[1]]]).det();
        Some([d0 / d, d1 / d])
    }

    /// Smallest eigenvalue of a symmetric matrix.
    pub fn min_eigenvalue_symmetric(&self) -> f64 {
        let a = self.0[0][0];
        let b = 0.5 * (self.0[0][1] + self.0[1][0]);
        let c = self.0[1][1];
        let mean = 0.5 * (a + c);
        let radius = (0.25 * (a - c) * (a - c) + b * b).sqrt();
        mean - radius
    }
}
