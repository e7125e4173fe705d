//! Directional differentials of the 2x2 determinant.
//!
//! For a matrix-valued perturbation `C`, the first differential of `det` at
//! `M` is the sum over columns of the determinant of `M` with that single
//! column replaced by the matching column of `C`. The second differential
//! replaces both columns, one from each perturbation, summed over the two
//! ways of assigning them; for 2x2 matrices it no longer depends on `M`.

use crate::mat2::Mat2;

/// Determinant of `m` with column `col` replaced by the same column of `c`.
pub fn det_with_column(m: &Mat2, col: usize, c: &Mat2) -> f64 {
    let mut repl = *m;
    repl.0[0][col] = c.0[0][col];
    repl.0[1][col] = c.0[1][col];
    repl.det()
}

/// First differential `D det(M)(C)`.
pub fn det_differential(m: &Mat2, c: &Mat2) -> f64 {
    det_with_column(m, 0, c) + det_with_column(m, 1, c)
}

/// Second differential `D^2 det(M)(C1, C2)`; constant in `M` for 2x2.
pub fn det_second_differential(_m: &Mat2, c1: &Mat2, c2: &Mat2) -> f64 {
    let first = Mat2([[c1.0[0][0], c2.0[0][1]], [c1.0[1][0], c2.0[1][1]]]);
    let second = Mat2([[c2.0[0][0], c1.0[0][1]], [c2.0[1][0], c1.0[1][1]]]);
    first.det() + second.det()
}
