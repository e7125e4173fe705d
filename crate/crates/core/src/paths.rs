//! Euler path simulation with per-path counter-based randomness.
//!
//! Every path owns its own stream of a seeded ChaCha generator, so the
//! sampled increments depend only on `(seed, path index)` and never on the
//! number of worker threads or the traversal order. Workers fill disjoint
//! row slices in parallel; all reductions over paths happen serially in
//! index order, which keeps whole-run outputs bit-identical across worker
//! counts.
//!
//! Pathwise discounting uses the trapezoid rule on the short rate along the
//! path, `D_{k+1} = D_k exp(-(r_k + r_{k+1}) dt / 2)`, with `D_0 = 1`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::model::{DiffusionModel, HORIZON};
use crate::{Error, Point, Result};

/// Simulation controls.
#[derive(Clone, Debug)]
pub struct SimOptions {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    /// Pair consecutive paths on one stream with mirrored increments.
    pub antithetic: bool,
    /// Worker threads; zero means the library default.
    pub workers: usize,
}

impl SimOptions {
    pub fn new(n_paths: usize, n_steps: usize, seed: u64) -> Self {
        SimOptions {
            n_paths,
            n_steps,
            seed,
            antithetic: false,
            workers: 0,
        }
    }
}

/// Simulated states, increments and pathwise discount factors.
#[derive(Clone, Debug)]
pub struct PathBundle {
    pub n_paths: usize,
    pub n_steps: usize,
    /// States, `(n_steps + 1) * 2` per path.
    x: Vec<f64>,
    /// Brownian increments, `n_steps * 2` per path.
    dw: Vec<f64>,
    /// Discount factors, `n_steps + 1` per path.
    discount: Vec<f64>,
}

impl PathBundle {
    pub fn dt(&self) -> f64 {
        HORIZON / self.n_steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    pub fn state(&self, path: usize, k: usize) -> Point {
        let base = (path * (self.n_steps + 1) + k) * 2;
        [self.x[base], self.x[base + 1]]
    }

    pub fn increment(&self, path: usize, k: usize) -> [f64; 2] {
        let base = (path * self.n_steps + k) * 2;
        [self.dw[base], self.dw[base + 1]]
    }

    pub fn discount(&self, path: usize, k: usize) -> f64 {
        self.discount[path * (self.n_steps + 1) + k]
    }
}

/// The generator owned by one path (or antithetic pair) of a run.
pub fn path_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws `n_steps` Brownian increments over a horizon split uniformly.
pub fn draw_increments(rng: &mut ChaCha8Rng, n_steps: usize, dt: f64) -> Vec<[f64; 2]> {
    let sqrt_dt = dt.sqrt();
    (0..n_steps)
        .map(|_| {
            let z1: f64 = StandardNormal.sample(rng);
            let z2: f64 = StandardNormal.sample(rng);
            [sqrt_dt * z1, sqrt_dt * z2]
        })
        .collect()
}

/// Sums consecutive groups of `factor` fine increments, producing the same
/// Brownian path sampled on a grid `factor` times coarser.
pub fn aggregate_increments(fine: &[[f64; 2]], factor: usize) -> Vec<[f64; 2]> {
    assert!(
        factor > 0 && fine.len() % factor == 0,
        "cannot aggregate {} increments by factor {factor}",
        fine.len()
    );
    fine.chunks(factor)
        .map(|chunk| {
            let mut s = [0.0, 0.0];
            for d in chunk {
                s[0] += d[0];
                s[1] += d[1];
            }
            s
        })
        .collect()
}

/// Walks one Euler path from the model start state using the given
/// increments; returns the visited states and pathwise discounts.
pub fn euler_from_increments(
    model: &DiffusionModel,
    increments: &[[f64; 2]],
) -> Result<(Vec<Point>, Vec<f64>)> {
    let n_steps = increments.len();
    let dt = HORIZON / n_steps as f64;
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut discounts = Vec::with_capacity(n_steps + 1);
    let mut x = model.x0;
    states.push(x);
    discounts.push(1.0);
    let mut r_prev = model.eval_coeffs(0.0, x)?.r;
    let mut disc = 1.0;
    for (k, dwk) in increments.iter().enumerate() {
        let t = k as f64 * dt;
        let c = model.eval_coeffs(t, x)?;
        let mut next = x;
        for i in 0..2 {
            next[i] += c.b[i] * dt
                + c.sigma.0[i][0] * dwk[0]
                + c.sigma.0[i][1] * dwk[1];
        }
        let t_next = (k + 1) as f64 * dt;
        let r_next = model.eval_coeffs(t_next, next)?.r;
        disc *= (-0.5 * (r_prev + r_next) * dt).exp();
        states.push(next);
        discounts.push(disc);
        x = next;
        r_prev = r_next;
    }
    Ok((states, discounts))
}

/// Simulates all paths of a run. The sampled numbers for path `p` come from
/// stream `p` (or stream `p / 2` with mirrored signs when antithetic).
pub fn simulate_paths(model: &DiffusionModel, opts: &SimOptions) -> Result<PathBundle> {
    if opts.n_paths == 0 || opts.n_steps == 0 {
        return Err(Error::InvalidInput(format!(
            "simulation needs paths and steps, got n_paths={}, n_steps={}",
            opts.n_paths, opts.n_steps
        )));
    }
    let n_paths = opts.n_paths;
    let n_steps = opts.n_steps;
    let dt = HORIZON / n_steps as f64;
    let sqrt_dt = dt.sqrt();

    let mut x = vec![0.0; n_paths * (n_steps + 1) * 2];
    let mut dw = vec![0.0; n_paths * n_steps * 2];
    let mut discount = vec![0.0; n_paths * (n_steps + 1)];

    let run = |x: &mut Vec<f64>, dw: &mut Vec<f64>, discount: &mut Vec<f64>| -> Result<()> {
        x.par_chunks_mut((n_steps + 1) * 2)
            .zip(dw.par_chunks_mut(n_steps * 2))
            .zip(discount.par_chunks_mut(n_steps + 1))
            .enumerate()
            .try_for_each(|(p, ((xr, dwr), dr))| -> Result<()> {
                let (stream, sign) = if opts.antithetic {
                    (p as u64 / 2, if p % 2 == 0 { 1.0 } else { -1.0 })
                } else {
                    (p as u64, 1.0)
                };
                let mut rng = path_rng(opts.seed, stream);
                let mut xk = model.x0;
                xr[0] = xk[0];
                xr[1] = xk[1];
                dr[0] = 1.0;
                let mut disc = 1.0;
                let mut r_prev = model.eval_coeffs(0.0, xk)?.r;
                for k in 0..n_steps {
                    let z1: f64 = StandardNormal.sample(&mut rng);
                    let z2: f64 = StandardNormal.sample(&mut rng);
                    let dwk = [sign * sqrt_dt * z1, sign * sqrt_dt * z2];
                    dwr[2 * k] = dwk[0];
                    dwr[2 * k + 1] = dwk[1];
                    let t = k as f64 * dt;
                    let c = model.eval_coeffs(t, xk)?;
                    let mut next = xk;
                    for i in 0..2 {
                        next[i] += c.b[i] * dt
                            + c.sigma.0[i][0] * dwk[0]
                            + c.sigma.0[i][1] * dwk[1];
                    }
                    let r_next = model.eval_coeffs((k + 1) as f64 * dt, next)?.r;
                    disc *= (-0.5 * (r_prev + r_next) * dt).exp();
                    xr[2 * (k + 1)] = next[0];
                    xr[2 * (k + 1) + 1] = next[1];
                    dr[k + 1] = disc;
                    xk = next;
                    r_prev = r_next;
                }
                Ok(())
            })
    };

    if opts.workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .map_err(|e| Error::Construction(format!("worker pool: {e}")))?;
        pool.install(|| run(&mut x, &mut dw, &mut discount))?;
    } else {
        run(&mut x, &mut dw, &mut discount)?;
    }

    Ok(PathBundle {
        n_paths,
        n_steps,
        x,
        dw,
        discount,
    })
}
