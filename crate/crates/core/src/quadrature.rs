//! Composite Gauss-Legendre quadrature in one and two dimensions.

use crate::grid::DomainBox;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`,
/// computed by Newton iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev-based initial guess for the i-th positive root.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre polynomial and derivative at x by recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Composite rule: `cells` equal subintervals of `[a, b]`, `n_gl` points each.
pub fn integrate_1d<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, cells: usize, n_gl: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (nodes, weights) = gauss_legendre(n_gl);
    let h = (b - a) / cells as f64;
    let mut acc = 0.0;
    for c in 0..cells {
        let lo = a + c as f64 * h;
        let mid = lo + 0.5 * h;
        let half = 0.5 * h;
        for (x, w) in nodes.iter().zip(&weights) {
            acc += w * half * f(mid + half * x);
        }
    }
    acc
}

/// Composite tensor rule over a rectangle.
pub fn integrate_2d<F: FnMut(f64, f64) -> f64>(
    mut f: F,
    rect: &DomainBox,
    cells: (usize, usize),
    n_gl: usize,
) -> f64 {
    let (nodes, weights) = gauss_legendre(n_gl);
    let h1 = rect.width(0) / cells.0 as f64;
    let h2 = rect.width(1) / cells.1 as f64;
    let mut acc = 0.0;
    for c1 in 0..cells.0 {
        let mid1 = rect.lo[0] + (c1 as f64 + 0.5) * h1;
        for c2 in 0..cells.1 {
            let mid2 = rect.lo[1] + (c2 as f64 + 0.5) * h2;
            for (u, wu) in nodes.iter().zip(&weights) {
                let x1 = mid1 + 0.5 * h1 * u;
                for (v, wv) in nodes.iter().zip(&weights) {
                    let x2 = mid2 + 0.5 * h2 * v;
                    acc += wu * wv * 0.25 * h1 * h2 * f(x1, x2);
                }
            }
        }
    }
    acc
}

/// Result of an adaptive refinement loop.
#[derive(Clone, Copy, Debug)]
pub struct AdaptiveResult {
    pub value: f64,
    /// Disagreement between the last two refinement levels.
    pub error_estimate: f64,
    pub converged: bool,
    /// Cells per axis at the final level.
    pub final_cells: usize,
}

/// Refines a 2d composite rule (doubling cells per axis) until two successive
/// levels agree to `tol_rel` relatively or `tol_abs` absolutely.
pub fn adaptive_2d<F: FnMut(f64, f64) -> f64>(
    mut f: F,
    rect: &DomainBox,
    start_cells: usize,
    max_cells: usize,
    n_gl: usize,
    tol_rel: f64,
    tol_abs: f64,
) -> AdaptiveResult {
    let mut cells = start_cells.max(1);
    let mut prev = integrate_2d(&mut f, rect, (cells, cells), n_gl);
    loop {
        let next_cells = cells * 2;
        if next_cells > max_cells {
            return AdaptiveResult {
                value: prev,
                error_estimate: f64::NAN,
                converged: false,
                final_cells: cells,
            };
        }
        let next = integrate_2d(&mut f, rect, (next_cells, next_cells), n_gl);
        let delta = (next - prev).abs();
        if delta <= tol_rel * next.abs() || delta <= tol_abs {
            return AdaptiveResult {
                value: next,
                error_estimate: delta,
                converged: true,
                final_cells: next_cells,
            };
        }
        prev = next;
        cells = next_cells;
    }
}

/// One-dimensional counterpart of [`adaptive_2d`].
pub fn adaptive_1d<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    start_cells: usize,
    max_cells: usize,
    n_gl: usize,
    tol_rel: f64,
    tol_abs: f64,
) -> AdaptiveResult {
    let mut cells = start_cells.max(1);
    let mut prev = integrate_1d(&mut f, a, b, cells, n_gl);
    loop {
        let next_cells = cells * 2;
        if next_cells > max_cells {
            return AdaptiveResult {
                value: prev,
                error_estimate: f64::NAN,
                converged: false,
                final_cells: cells,
            };
        }
        let next = integrate_1d(&mut f, a, b, next_cells, n_gl);
        let delta = (next - prev).abs();
        if delta <= tol_rel * next.abs() || delta <= tol_abs {
            return AdaptiveResult {
                value: next,
                error_estimate: delta,
                converged: true,
                final_cells: next_cells,
            };
        }
        prev = next;
        cells = next_cells;
    }
}
