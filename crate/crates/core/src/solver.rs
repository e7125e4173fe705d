//! Backward theta-scheme solver for the pricing equation
//! `d_t v + 1/2 sum a^{jk} d2_{jk} v + sum b^j d_j v - r v = 0` on `[0,1] x box`.
//!
//! Each backward step splits the spatial operator into two one-dimensional
//! parts (each carrying half the zeroth-order term) and the mixed-derivative
//! part. The mixed part is treated explicitly with one corrector pass; the
//! one-dimensional parts are theta-implicit, so every linear system is
//! tridiagonal along a grid line. The first `rannacher_steps` steps are run
//! fully implicitly as two half-steps to damp the non-smooth terminal data.
//! Boundary faces carry the zero-second-normal-derivative condition, which
//! collapses to one-sided first differences in the boundary rows.

use crate::grid::{SolveInfo, SpaceTimeGrid, ValueField};
use crate::model::DiffusionModel;
use crate::payoff::Payoff;
use crate::{Error, Result};

/// Pointwise coefficients sampled on the space grid at one time.
struct CoeffSheet {
    a11: Vec<f64>,
    a22: Vec<f64>,
    /// `(a12 + a21) / 2`, the factor of the mixed derivative.
    cross: Vec<f64>,
    b1: Vec<f64>,
    b2: Vec<f64>,
    r: Vec<f64>,
}

fn coeff_sheet(model: &DiffusionModel, grid: &SpaceTimeGrid, t: f64) -> Result<CoeffSheet> {
    let n = grid.n1 * grid.n2;
    let mut s = CoeffSheet {
        a11: vec![0.0; n],
        a22: vec![0.0; n],
        cross: vec![0.0; n],
        b1: vec![0.0; n],
        b2: vec![0.0; n],
        r: vec![0.0; n],
    };
    for i in 0..grid.n1 {
        for j in 0..grid.n2 {
            let idx = i * grid.n2 + j;
            let c = model.eval_coeffs(t, grid.node(i, j))?;
            s.a11[idx] = c.a.0[0][0];
            s.a22[idx] = c.a.0[1][1];
            s.cross[idx] = 0.5 * (c.a.0[0][1] + c.a.0[1][0]);
            s.b1[idx] = c.b[0];
            s.b2[idx] = c.b[1];
            s.r[idx] = c.r;
        }
    }
    Ok(s)
}

/// Node value with linear extrapolation outside the grid.
#[inline]
fn ghost(u: &[f64], n1: usize, n2: usize, i: isize, j: isize) -> f64 {
    if i < 0 {
        return 2.0 * ghost(u, n1, n2, 0, j) - ghost(u, n1, n2, 1, j);
    }
    if i >= n1 as isize {
        return 2.0 * ghost(u, n1, n2, n1 as isize - 1, j) - ghost(u, n1, n2, n1 as isize - 2, j);
    }
    if j < 0 {
        return 2.0 * ghost(u, n1, n2, i, 0) - ghost(u, n1, n2, i, 1);
    }
    if j >= n2 as isize {
        return 2.0 * ghost(u, n1, n2, i, n2 as isize - 1) - ghost(u, n1, n2, i, n2 as isize - 2);
    }
    u[i as usize * n2 + j as usize]
}

/// `F1 u = 1/2 a11 D11 u + b1 D1 u - 1/2 r u` with boundary rows reduced to
/// one-sided first differences.
fn apply_f1(s: &CoeffSheet, grid: &SpaceTimeGrid, u: &[f64], out: &mut [f64]) {
    let (n1, n2) = (grid.n1, grid.n2);
    let h = grid.h(0);
    for i in 0..n1 {
        for j in 0..n2 {
            let idx = i * n2 + j;
            let (d1, d11) = if i == 0 {
                ((u[n2 + j] - u[j]) / h, 0.0)
            } else if i == n1 - 1 {
                ((u[idx] - u[idx - n2]) / h, 0.0)
            } else {
                (
                    (u[idx + n2] - u[idx - n2]) / (2.0 * h),
                    (u[idx + n2] - 2.0 * u[idx] + u[idx - n2]) / (h * h),
                )
            };
            out[idx] = 0.5 * s.a11[idx] * d11 + s.b1[idx] * d1 - 0.5 * s.r[idx] * u[idx];
        }
    }
}

fn apply_f2(s: &CoeffSheet, grid: &SpaceTimeGrid, u: &[f64], out: &mut [f64]) {
    let (n1, n2) = (grid.n1, grid.n2);
    let h = grid.h(1);
    for i in 0..n1 {
        for j in 0..n2 {
            let idx = i * n2 + j;
            let (d1, d22) = if j == 0 {
                ((u[idx + 1] - u[idx]) / h, 0.0)
            } else if j == n2 - 1 {
                ((u[idx] - u[idx - 1]) / h, 0.0)
            } else {
                (
                    (u[idx + 1] - u[idx - 1]) / (2.0 * h),
                    (u[idx + 1] - 2.0 * u[idx] + u[idx - 1]) / (h * h),
                )
            };
            out[idx] = 0.5 * s.a22[idx] * d22 + s.b2[idx] * d1 - 0.5 * s.r[idx] * u[idx];
        }
    }
}

/// Mixed term `F0 u = cross * D12 u`, ghost-extrapolated at the faces.
fn apply_f0(s: &CoeffSheet, grid: &SpaceTimeGrid, u: &[f64], out: &mut [f64]) {
    let (n1, n2) = (grid.n1, grid.n2);
    let denom = 4.0 * grid.h(0) * grid.h(1);
    for i in 0..n1 {
        for j in 0..n2 {
            let idx = i * n2 + j;
            let (ii, jj) = (i as isize, j as isize);
            let d12 = (ghost(u, n1, n2, ii + 1, jj + 1) - ghost(u, n1, n2, ii + 1, jj - 1)
                - ghost(u, n1, n2, ii - 1, jj + 1)
                + ghost(u, n1, n2, ii - 1, jj - 1))
                / denom;
            out[idx] = s.cross[idx] * d12;
        }
    }
}

/// Thomas elimination of a tridiagonal system written into scratch arrays.
/// Returns the smallest pivot magnitude relative to its row scale.
fn solve_tridiag(
    sub: &[f64],
    diag: &[f64],
    sup: &[f64],
    rhs: &mut [f64],
    scratch: &mut [f64],
    step: usize,
) -> Result<f64> {
    let n = diag.len();
    let mut min_ratio = f64::INFINITY;
    let mut piv = diag[0];
    let scale0 = diag[0].abs() + sup[0].abs();
    if piv.abs() <= 1e-14 * scale0 || piv == 0.0 {
        return Err(Error::LinearSolve {
            step,
            reason: format!("zero pivot in first row (diag={piv})"),
        });
    }
    min_ratio = min_ratio.min(piv.abs() / scale0.max(1e-300));
    rhs[0] /= piv;
    for k in 1..n {
        scratch[k] = sup[k - 1] / piv;
        piv = diag[k] - sub[k] * scratch[k];
        let scale = diag[k].abs() + sub[k].abs() + sup.get(k).map_or(0.0, |v| v.abs());
        if piv.abs() <= 1e-14 * scale || piv == 0.0 {
            return Err(Error::LinearSolve {
                step,
                reason: format!("vanishing pivot in row {k} (pivot={piv})"),
            });
        }
        min_ratio = min_ratio.min(piv.abs() / scale.max(1e-300));
        rhs[k] = (rhs[k] - sub[k] * rhs[k - 1]) / piv;
    }
    for k in (0..n - 1).rev() {
        rhs[k] -= scratch[k + 1] * rhs[k + 1];
    }
    Ok(min_ratio)
}

/// Implicit sweep `(I - theta dt F_dir) out = rhs` along every grid line of
/// the given direction, with coefficients from `s`.
fn implicit_sweep(
    s: &CoeffSheet,
    grid: &SpaceTimeGrid,
    dir: usize,
    theta_dt: f64,
    rhs_field: &[f64],
    out: &mut [f64],
    step: usize,
    min_pivot: &mut f64,
) -> Result<()> {
    let (n1, n2) = (grid.n1, grid.n2);
    let n = if dir == 0 { n1 } else { n2 };
    let lines = if dir == 0 { n2 } else { n1 };
    let h = grid.h(dir);
    let mut sub = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut sup = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut scratch = vec![0.0; n];

    for line in 0..lines {
        let idx_of = |p: usize| {
            if dir == 0 {
                p * n2 + line
            } else {
                line * n2 + p
            }
        };
        for p in 0..n {
            let idx = idx_of(p);
            let (aa, bb) = if dir == 0 {
                (s.a11[idx], s.b1[idx])
            } else {
                (s.a22[idx], s.b2[idx])
            };
            let rr = s.r[idx];
            if p == 0 {
                diag[0] = 1.0 + theta_dt * (bb / h + 0.5 * rr);
                sup[0] = -theta_dt * bb / h;
                sub[0] = 0.0;
            } else if p == n - 1 {
                diag[p] = 1.0 - theta_dt * (bb / h - 0.5 * rr);
                sub[p] = theta_dt * bb / h;
                sup[p] = 0.0;
            } else {
                let diff = 0.5 * aa / (h * h);
                let adv = bb / (2.0 * h);
                sub[p] = -theta_dt * (diff - adv);
                diag[p] = 1.0 + theta_dt * (aa / (h * h) + 0.5 * rr);
                sup[p] = -theta_dt * (diff + adv);
            }
            rhs[p] = rhs_field[idx];
        }
        let ratio = solve_tridiag(&sub, &diag, &sup, &mut rhs, &mut scratch, step)?;
        *min_pivot = min_pivot.min(ratio);
        for p in 0..n {
            out[idx_of(p)] = rhs[p];
        }
    }
    Ok(())
}

struct StepScratch {
    f1u: Vec<f64>,
    f2u: Vec<f64>,
    f0u: Vec<f64>,
    y0: Vec<f64>,
    y1: Vec<f64>,
    y2: Vec<f64>,
    f0y: Vec<f64>,
    rhs: Vec<f64>,
}

impl StepScratch {
    fn new(n: usize) -> Self {
        StepScratch {
            f1u: vec![0.0; n],
            f2u: vec![0.0; n],
            f0u: vec![0.0; n],
            y0: vec![0.0; n],
            y1: vec![0.0; n],
            y2: vec![0.0; n],
            f0y: vec![0.0; n],
            rhs: vec![0.0; n],
        }
    }
}

/// One backward step of size `dt` from the sheet `old` (time `t + dt`) to the
/// sheet `new` (time `t`), reading `u` and writing the stepped values to `u`.
#[allow(clippy::too_many_arguments)]
fn step(
    grid: &SpaceTimeGrid,
    old: &CoeffSheet,
    new: &CoeffSheet,
    theta: f64,
    dt: f64,
    u: &mut Vec<f64>,
    ws: &mut StepScratch,
    step_index: usize,
    min_pivot: &mut f64,
) -> Result<()> {
    let n = u.len();
    apply_f1(old, grid, u, &mut ws.f1u);
    apply_f2(old, grid, u, &mut ws.f2u);
    apply_f0(old, grid, u, &mut ws.f0u);
    for idx in 0..n {
        ws.y0[idx] = u[idx] + dt * (ws.f1u[idx] + ws.f2u[idx] + ws.f0u[idx]);
    }
    let theta_dt = theta * dt;

    // Predictor: implicit corrections direction by direction.
    for idx in 0..n {
        ws.rhs[idx] = ws.y0[idx] - theta_dt * ws.f1u[idx];
    }
    implicit_sweep(new, grid, 0, theta_dt, &ws.rhs, &mut ws.y1, step_index, min_pivot)?;
    for idx in 0..n {
        ws.rhs[idx] = ws.y1[idx] - theta_dt * ws.f2u[idx];
    }
    implicit_sweep(new, grid, 1, theta_dt, &ws.rhs, &mut ws.y2, step_index, min_pivot)?;

    // One corrector pass on the explicit mixed term.
    apply_f0(new, grid, &ws.y2, &mut ws.f0y);
    for idx in 0..n {
        ws.rhs[idx] = ws.y0[idx] + 0.5 * dt * (ws.f0y[idx] - ws.f0u[idx]) - theta_dt * ws.f1u[idx];
    }
    implicit_sweep(new, grid, 0, theta_dt, &ws.rhs, &mut ws.y1, step_index, min_pivot)?;
    for idx in 0..n {
        ws.rhs[idx] = ws.y1[idx] - theta_dt * ws.f2u[idx];
    }
    implicit_sweep(new, grid, 1, theta_dt, &ws.rhs, u, step_index, min_pivot)?;
    Ok(())
}

/// Solves the pricing equation backward from the terminal payoff and stores
/// every time level.
pub fn solve_backward(
    model: &DiffusionModel,
    grid: &SpaceTimeGrid,
    terminal: &Payoff,
) -> Result<ValueField> {
    let per_level = grid.n1 * grid.n2;
    let n_t = grid.n_t;
    let dt = grid.dt();

    let mut u = Vec::with_capacity(per_level);
    for i in 0..grid.n1 {
        for j in 0..grid.n2 {
            let v = terminal.eval(grid.node(i, j));
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "terminal payoff not finite at {:?}",
                    grid.node(i, j)
                )));
            }
            u.push(v);
        }
    }

    let mut levels = vec![0.0; (n_t + 1) * per_level];
    levels[n_t * per_level..].copy_from_slice(&u);

    let mut ws = StepScratch::new(per_level);
    let mut min_pivot = f64::INFINITY;
    let mut cross_ratio = 0.0f64;
    let mut psd_violation = false;

    let mut sheet_old = coeff_sheet(model, grid, 1.0)?;
    for idx in 0..per_level {
        let denom = (sheet_old.a11[idx] * sheet_old.a22[idx]).sqrt();
        if sheet_old.cross[idx].abs() > denom * (1.0 + 1e-9) {
            psd_violation = true;
        }
    }

    for l in (0..n_t).rev() {
        let step_index = n_t - l;
        let t_new = l as f64 * dt;
        let sheet_new = coeff_sheet(model, grid, t_new)?;
        for idx in 0..per_level {
            cross_ratio = cross_ratio.max(sheet_new.cross[idx].abs() * dt / (grid.h(0) * grid.h(1)));
            let denom = (sheet_new.a11[idx] * sheet_new.a22[idx]).sqrt();
            if sheet_new.cross[idx].abs() > denom * (1.0 + 1e-9) {
                psd_violation = true;
            }
        }

        if step_index <= grid.rannacher_steps {
            // Smoothed startup: two fully implicit half-steps.
            let t_mid = t_new + 0.5 * dt;
            let sheet_mid = coeff_sheet(model, grid, t_mid)?;
            step(
                grid, &sheet_old, &sheet_mid, 1.0, 0.5 * dt, &mut u, &mut ws, step_index,
                &mut min_pivot,
            )?;
            step(
                grid, &sheet_mid, &sheet_new, 1.0, 0.5 * dt, &mut u, &mut ws, step_index,
                &mut min_pivot,
            )?;
        } else {
            step(
                grid,
                &sheet_old,
                &sheet_new,
                grid.theta,
                dt,
                &mut u,
                &mut ws,
                step_index,
                &mut min_pivot,
            )?;
        }
        levels[l * per_level..(l + 1) * per_level].copy_from_slice(&u);
        sheet_old = sheet_new;
    }

    let mut field = ValueField::new(grid.clone(), grid.times(), levels)?;
    field.info = SolveInfo {
        cross_term_ratio: cross_ratio,
        cross_term_warning: psd_violation,
        min_pivot_ratio: if min_pivot.is_finite() { min_pivot } else { 0.0 },
    };
    Ok(field)
}
