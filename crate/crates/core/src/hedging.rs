//! Pathwise replication of a claim with the two traded assets.
//!
//! Along each simulated path the hedge ratios solve, at every step,
//! `H^T M = rho` where the rows of `M` are the discounted diffusion
//! integrands of the forward asset and the derivative asset,
//! `D (grad f)^T sigma` and `D (grad v)^T sigma`, and the right side is the
//! integrand `D (grad u)^T sigma` of the target claim. The portfolio then
//! accumulates the actual increments of the discounted asset prices, and the
//! replication error compares the terminal portfolio against the discounted
//! target payoff.
//!
//! When the integrand matrix degenerates (its determinant is small relative
//! to the product of the row norms) the solve is skipped and the previous
//! ratios are held; these events are counted and reported rather than
//! silently absorbed.

use rayon::prelude::*;
use serde::Serialize;

use crate::grid::ValueField;
use crate::mat2::Mat2;
use crate::model::{DiffusionModel, HORIZON};
use crate::paths::{aggregate_increments, draw_increments, euler_from_increments, path_rng, PathBundle};
use crate::payoff::Payoff;
use crate::solver::solve_backward;
use crate::{Error, Point, Result};

/// Hedging controls.
#[derive(Clone, Debug)]
pub struct HedgeOptions {
    /// Degeneracy guard: fall back when
    /// `|det M| <= tol_rel_det * |row_0| * |row_1|`.
    pub tol_rel_det: f64,
    /// Worker threads; zero means the library default.
    pub workers: usize,
}

impl Default for HedgeOptions {
    fn default() -> Self {
        HedgeOptions {
            tol_rel_det: 1e-9,
            workers: 0,
        }
    }
}

/// Aggregate replication outcome over a bundle of paths.
#[derive(Clone, Debug, Serialize)]
pub struct HedgeReport {
    pub target: String,
    pub n_paths: usize,
    pub n_steps: usize,
    /// Initial claim price, the value the portfolio starts from.
    pub price0: f64,
    pub rmse: f64,
    pub mean_error: f64,
    pub max_abs_error: f64,
    /// Root-mean-square of the discounted target payoff, for scaling.
    pub error_scale: f64,
    pub fallback_events: usize,
    pub fallback_fraction: f64,
    /// Fraction of field lookups that had to clamp the query into the grid.
    pub clipped_fraction: f64,
    pub min_rel_det: f64,
}

struct WalkOutcome {
    err: f64,
    fallbacks: usize,
    clipped: usize,
    lookups: usize,
    min_rel_det: f64,
    terminal_target: f64,
}

/// Replays one path: hedge ratios at the left endpoint of every step,
/// portfolio fed with the actual discounted price increments.
fn hedge_walk(
    model: &DiffusionModel,
    v: &ValueField,
    u: &ValueField,
    target: &Payoff,
    states: &[Point],
    discounts: &[f64],
    price0: f64,
    opts: &HedgeOptions,
) -> Result<WalkOutcome> {
    let n_steps = states.len() - 1;
    let dt = HORIZON / n_steps as f64;

    let mut clipped = 0usize;
    let mut lookups = 0usize;

    // Discounted asset prices along the path. The derivative leg ends in the
    // exact payoff: at expiry the asset is worth what it pays.
    let mut mf = Vec::with_capacity(n_steps + 1);
    let mut mb = Vec::with_capacity(n_steps + 1);
    for k in 0..=n_steps {
        let t = (k as f64 * dt).min(HORIZON);
        mf.push(discounts[k] * model.f.eval(t, states[k]));
        if k == n_steps {
            mb.push(discounts[k] * model.g.eval(states[k]));
        } else {
            let (val, clip) = v.interpolate(t, states[k]);
            lookups += 1;
            clipped += clip as usize;
            mb.push(discounts[k] * val);
        }
    }

    let mut m_hat = price0;
    let mut h = [0.0f64, 0.0f64];
    let mut fallbacks = 0usize;
    let mut min_rel_det = f64::INFINITY;

    for k in 0..n_steps {
        let t = k as f64 * dt;
        let x = states[k];
        let d = discounts[k];
        let c = model.eval_coeffs(t, x)?;

        let fg = [model.f.dx(0, t, x), model.f.dx(1, t, x)];
        let (vg, clip_v) = v.grad_interpolate(t, x);
        let (ug, clip_u) = u.grad_interpolate(t, x);
        lookups += 2;
        clipped += clip_v as usize + clip_u as usize;

        let row = |g: [f64; 2]| {
            [
                d * (g[0] * c.sigma.0[0][0] + g[1] * c.sigma.0[1][0]),
                d * (g[0] * c.sigma.0[0][1] + g[1] * c.sigma.0[1][1]),
            ]
        };
        let row_f = row(fg);
        let row_v = row(vg);
        let rhs = row(ug);

        let m = Mat2::from_rows(row_f, row_v);
        let det = m.det();
        let scale = row_f[0].hypot(row_f[1]) * row_v[0].hypot(row_v[1]);
        let rel = if scale > 0.0 { det.abs() / scale } else { 0.0 };
        min_rel_det = min_rel_det.min(rel);
        if det.abs() <= opts.tol_rel_det * scale {
            fallbacks += 1;
        } else if let Some(sol) = m.solve_left(rhs) {
            h = sol;
        } else {
            fallbacks += 1;
        }
        m_hat += h[0] * (mf[k + 1] - mf[k]) + h[1] * (mb[k + 1] - mb[k]);
    }

    let terminal_target = discounts[n_steps] * target.eval(states[n_steps]);
    Ok(WalkOutcome {
        err: m_hat - terminal_target,
        fallbacks,
        clipped,
        lookups,
        min_rel_det,
        terminal_target,
    })
}

fn payoff_matches(a: &Payoff, b: &Payoff) -> bool {
    match (a, b) {
        (
            Payoff::Call {
                gamma: g1,
                rate: r1,
            },
            Payoff::Call {
                gamma: g2,
                rate: r2,
            },
        ) => g1 == g2 && r1 == r2,
        (
            Payoff::Put {
                gamma: g1,
                rate: r1,
            },
            Payoff::Put {
                gamma: g2,
                rate: r2,
            },
        ) => g1 == g2 && r1 == r2,
        (Payoff::Digital { gamma: g1 }, Payoff::Digital { gamma: g2 }) => g1 == g2,
        (Payoff::Coordinate { axis: a1 }, Payoff::Coordinate { axis: a2 }) => a1 == a2,
        _ => false,
    }
}

/// The target's own price field: the derivative field itself when the
/// payoffs coincide (bitwise reuse), otherwise a fresh backward solve on the
/// same grid.
fn target_field<'a>(
    model: &DiffusionModel,
    v: &'a ValueField,
    target: &Payoff,
) -> Result<std::borrow::Cow<'a, ValueField>> {
    if payoff_matches(target, &model.g) {
        Ok(std::borrow::Cow::Borrowed(v))
    } else {
        Ok(std::borrow::Cow::Owned(solve_backward(
            model, &v.grid, target,
        )?))
    }
}

fn run_pool<T: Send>(
    workers: usize,
    job: impl FnOnce() -> Result<T> + Send,
) -> Result<T> {
    if workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Construction(format!("worker pool: {e}")))?;
        pool.install(job)
    } else {
        job()
    }
}

/// Replicates `target` along every path of the bundle. Returns the report
/// and the per-path replication errors in path order.
pub fn replicate_claim(
    model: &DiffusionModel,
    v: &ValueField,
    target: &Payoff,
    bundle: &PathBundle,
    opts: &HedgeOptions,
) -> Result<(HedgeReport, Vec<f64>)> {
    let u = target_field(model, v, target)?;
    let price0 = u.interpolate(0.0, model.x0).0;
    let n_steps = bundle.n_steps;

    let outcomes: Vec<WalkOutcome> = run_pool(opts.workers, || {
        (0..bundle.n_paths)
            .into_par_iter()
            .map(|p| {
                let states: Vec<Point> = (0..=n_steps).map(|k| bundle.state(p, k)).collect();
                let discounts: Vec<f64> =
                    (0..=n_steps).map(|k| bundle.discount(p, k)).collect();
                hedge_walk(model, v, &u, target, &states, &discounts, price0, opts)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut errors = Vec::with_capacity(outcomes.len());
    let mut sum_sq = 0.0;
    let mut sum = 0.0;
    let mut max_abs = 0.0f64;
    let mut target_sq = 0.0;
    let mut fallbacks = 0usize;
    let mut clipped = 0usize;
    let mut lookups = 0usize;
    let mut min_rel_det = f64::INFINITY;
    for o in &outcomes {
        errors.push(o.err);
        sum_sq += o.err * o.err;
        sum += o.err;
        max_abs = max_abs.max(o.err.abs());
        target_sq += o.terminal_target * o.terminal_target;
        fallbacks += o.fallbacks;
        clipped += o.clipped;
        lookups += o.lookups;
        min_rel_det = min_rel_det.min(o.min_rel_det);
    }
    let n = outcomes.len() as f64;
    let report = HedgeReport {
        target: target.name(),
        n_paths: bundle.n_paths,
        n_steps,
        price0,
        rmse: (sum_sq / n).sqrt(),
        mean_error: sum / n,
        max_abs_error: max_abs,
        error_scale: (target_sq / n).sqrt(),
        fallback_events: fallbacks,
        fallback_fraction: fallbacks as f64 / (n * n_steps as f64),
        clipped_fraction: clipped as f64 / lookups.max(1) as f64,
        min_rel_det: if min_rel_det.is_finite() {
            min_rel_det
        } else {
            0.0
        },
    };
    Ok((report, errors))
}

/// One refinement level of the step-count study.
#[derive(Clone, Debug, Serialize)]
pub struct ConvergencePoint {
    pub n_steps: usize,
    pub rmse: f64,
    pub fallback_fraction: f64,
}

/// Replication error versus step count on a common family of Brownian
/// paths: each path is drawn once at the finest level and aggregated down,
/// so coarser levels see the same noise and the comparison is pure
/// discretization.
pub fn convergence_study(
    model: &DiffusionModel,
    v: &ValueField,
    target: &Payoff,
    n_paths: usize,
    levels: &[usize],
    seed: u64,
    opts: &HedgeOptions,
) -> Result<Vec<ConvergencePoint>> {
    if n_paths == 0 || levels.is_empty() {
        return Err(Error::InvalidInput(
            "convergence study needs paths and at least one level".to_string(),
        ));
    }
    let finest = *levels.last().unwrap();
    for w in levels.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::InvalidInput(format!(
                "levels must increase strictly, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    for &l in levels {
        if l == 0 || finest % l != 0 {
            return Err(Error::InvalidInput(format!(
                "level {l} does not divide the finest level {finest}"
            )));
        }
    }

    let u = target_field(model, v, target)?;
    let price0 = u.interpolate(0.0, model.x0).0;
    let dt_fine = HORIZON / finest as f64;

    // Per path: squared error and fallback count per level.
    let per_path: Vec<(Vec<f64>, Vec<usize>)> = run_pool(opts.workers, || {
        (0..n_paths)
            .into_par_iter()
            .map(|p| {
                let mut rng = path_rng(seed, p as u64);
                let fine = draw_increments(&mut rng, finest, dt_fine);
                let mut sq = Vec::with_capacity(levels.len());
                let mut fb = Vec::with_capacity(levels.len());
                for &level in levels {
                    let incs = aggregate_increments(&fine, finest / level);
                    let (states, discounts) = euler_from_increments(model, &incs)?;
                    let o = hedge_walk(
                        model, v, &u, target, &states, &discounts, price0, opts,
                    )?;
                    sq.push(o.err * o.err);
                    fb.push(o.fallbacks);
                }
                Ok((sq, fb))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut out = Vec::with_capacity(levels.len());
    for (li, &level) in levels.iter().enumerate() {
        let mut sum_sq = 0.0;
        let mut fb = 0usize;
        for (sq, f) in &per_path {
            sum_sq += sq[li];
            fb += f[li];
        }
        out.push(ConvergencePoint {
            n_steps: level,
            rmse: (sum_sq / n_paths as f64).sqrt(),
            fallback_fraction: fb as f64 / (n_paths * level) as f64,
        });
    }
    Ok(out)
}
