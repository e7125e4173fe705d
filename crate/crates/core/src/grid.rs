//! Tensor grid on `[0,1] x box` and the solution field stored on it.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::{Point, Result};

/// Axis-aligned rectangle in state space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub lo: Point,
    pub hi: Point,
}

impl DomainBox {
    pub fn new(lo: Point, hi: Point) -> Result<Self> {
        if !(lo[0] < hi[0] && lo[1] < hi[1]) {
            return Err(Error::Grid(format!(
                "degenerate box: lo={lo:?}, hi={hi:?}"
            )));
        }
        Ok(DomainBox { lo, hi })
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn center(&self) -> Point {
        [
            0.5 * (self.lo[0] + self.hi[0]),
            0.5 * (self.lo[1] + self.hi[1]),
        ]
    }

    pub fn contains(&self, x: Point) -> bool {
        x[0] >= self.lo[0] && x[0] <= self.hi[0] && x[1] >= self.lo[1] && x[1] <= self.hi[1]
    }

    /// Clamps `x` into the box; the flag reports whether clamping occurred.
    pub fn clamp(&self, x: Point) -> (Point, bool) {
        let c = [
            x[0].clamp(self.lo[0], self.hi[0]),
            x[1].clamp(self.lo[1], self.hi[1]),
        ];
        (c, c != x)
    }

    /// Sub-box given by fractional coordinates of each axis.
    pub fn fraction(&self, f1: [f64; 2], f2: [f64; 2]) -> DomainBox {
        DomainBox {
            lo: [
                self.lo[0] + f1[0] * self.width(0),
                self.lo[1] + f2[0] * self.width(1),
            ],
            hi: [
                self.lo[0] + f1[1] * self.width(0),
                self.lo[1] + f2[1] * self.width(1),
            ],
        }
    }

    /// Intersection, or `None` when disjoint.
    pub fn intersect(&self, other: &DomainBox) -> Option<DomainBox> {
        let lo = [self.lo[0].max(other.lo[0]), self.lo[1].max(other.lo[1])];
        let hi = [self.hi[0].min(other.hi[0]), self.hi[1].min(other.hi[1])];
        if lo[0] < hi[0] && lo[1] < hi[1] {
            Some(DomainBox { lo, hi })
        } else {
            None
        }
    }
}

/// Uniform tensor grid: `n1 x n2` space nodes, `n_t` backward time steps on
/// `[0,1]`, theta-scheme weight and the count of smoothed startup steps.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpaceTimeGrid {
    pub domain: DomainBox,
    pub n1: usize,
    pub n2: usize,
    pub n_t: usize,
    pub theta: f64,
    pub rannacher_steps: usize,
}

impl SpaceTimeGrid {
    pub fn new(
        domain: DomainBox,
        n1: usize,
        n2: usize,
        n_t: usize,
        theta: f64,
        rannacher_steps: usize,
    ) -> Result<Self> {
        if n1 < 3 || n2 < 3 {
            return Err(Error::Grid(format!(
                "need at least 3 nodes per axis, got n1={n1}, n2={n2}"
            )));
        }
        if n_t < 1 {
            return Err(Error::Grid("need at least one time step".into()));
        }
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::Grid(format!("theta={theta} outside [0,1]")));
        }
        if rannacher_steps > n_t {
            return Err(Error::Grid(format!(
                "rannacher_steps={rannacher_steps} exceeds n_t={n_t}"
            )));
        }
        Ok(SpaceTimeGrid {
            domain,
            n1,
            n2,
            n_t,
            theta,
            rannacher_steps,
        })
    }

    pub fn h(&self, axis: usize) -> f64 {
        let n = if axis == 0 { self.n1 } else { self.n2 };
        self.domain.width(axis) / (n - 1) as f64
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.n_t as f64
    }

    pub fn x1(&self, i: usize) -> f64 {
        self.domain.lo[0] + i as f64 * self.h(0)
    }

    pub fn x2(&self, j: usize) -> f64 {
        self.domain.lo[1] + j as f64 * self.h(1)
    }

    pub fn node(&self, i: usize, j: usize) -> Point {
        [self.x1(i), self.x2(j)]
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_t).map(|l| l as f64 * self.dt()).collect()
    }

    /// Shifts the box along `x1` so the given abscissa falls midway between
    /// two grid lines. The shift never exceeds half a cell.
    pub fn with_kink_midway(mut self, kink_x1: f64) -> Self {
        let h = self.h(0);
        let offset = (kink_x1 - self.domain.lo[0]) / h;
        let frac = offset - offset.floor();
        let shift = (frac - 0.5) * h;
        self.domain.lo[0] += shift;
        self.domain.hi[0] += shift;
        self
    }

    /// Grid refined by the given factor in both space axes and in time.
    pub fn refined(&self, factor: usize) -> Self {
        SpaceTimeGrid {
            domain: self.domain,
            n1: (self.n1 - 1) * factor + 1,
            n2: (self.n2 - 1) * factor + 1,
            n_t: self.n_t * factor,
            theta: self.theta,
            rannacher_steps: self.rannacher_steps,
        }
    }
}

/// Scalar field stored on a grid at a set of monotone time levels.
#[derive(Clone, Debug)]
pub struct ValueField {
    pub grid: SpaceTimeGrid,
    times: Vec<f64>,
    values: Vec<f64>,
    /// Diagnostics attached by the solver.
    pub info: SolveInfo,
}

/// Bookkeeping from the time stepper.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SolveInfo {
    /// `max |a12| dt / (h1 h2)`; the explicit cross term is a stability
    /// heuristic, not unconditionally stable.
    pub cross_term_ratio: f64,
    pub cross_term_warning: bool,
    /// Smallest pivot magnitude met across all line solves, relative to the
    /// diagonal scale.
    pub min_pivot_ratio: f64,
}

impl ValueField {
    pub fn new(grid: SpaceTimeGrid, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let per_level = grid.n1 * grid.n2;
        if times.is_empty() || values.len() != times.len() * per_level {
            return Err(Error::Grid(format!(
                "value storage mismatch: {} levels, {} values, {} nodes per level",
                times.len(),
                values.len(),
                per_level
            )));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Grid("time levels are not strictly increasing".into()));
        }
        Ok(ValueField {
            grid,
            times,
            values,
            info: SolveInfo::default(),
        })
    }

    pub fn n_levels(&self) -> usize {
        self.times.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, level: usize) -> f64 {
        self.times[level]
    }

    /// Index of the stored level at time `t`, within tolerance.
    pub fn level_at(&self, t: f64) -> Result<usize> {
        let tol = 1e-9;
        match self
            .times
            .iter()
            .position(|&tl| (tl - t).abs() <= tol)
        {
            Some(l) => Ok(l),
            None => Err(Error::Grid(format!("no stored time level at t={t}"))),
        }
    }

    #[inline]
    fn idx(&self, level: usize, i: usize, j: usize) -> usize {
        (level * self.grid.n1 + i) * self.grid.n2 + j
    }

    #[inline]
    pub fn value(&self, level: usize, i: usize, j: usize) -> f64 {
        self.values[self.idx(level, i, j)]
    }

    pub fn level_values(&self, level: usize) -> &[f64] {
        let per_level = self.grid.n1 * self.grid.n2;
        &self.values[level * per_level..(level + 1) * per_level]
    }

    /// Node value extended by linear extrapolation outside the box, matching
    /// the zero-second-normal-derivative boundary condition.
    pub fn ghost_value(&self, level: usize, i: isize, j: isize) -> f64 {
        let n1 = self.grid.n1 as isize;
        let n2 = self.grid.n2 as isize;
        if i < 0 {
            return 2.0 * self.ghost_value(level, 0, j) - self.ghost_value(level, 1, j);
        }
        if i >= n1 {
            return 2.0 * self.ghost_value(level, n1 - 1, j) - self.ghost_value(level, n1 - 2, j);
        }
        if j < 0 {
            return 2.0 * self.ghost_value(level, i, 0) - self.ghost_value(level, i, 1);
        }
        if j >= n2 {
            return 2.0 * self.ghost_value(level, i, n2 - 1) - self.ghost_value(level, i, n2 - 2);
        }
        self.value(level, i as usize, j as usize)
    }

    /// First space derivative: central inside, one-sided at box edges.
    pub fn d1(&self, level: usize, i: usize, j: usize, axis: usize) -> f64 {
        let h = self.grid.h(axis);
        let (n, p) = if axis == 0 {
            (self.grid.n1, i)
        } else {
            (self.grid.n2, j)
        };
        let at = |q: usize| {
            if axis == 0 {
                self.value(level, q, j)
            } else {
                self.value(level, i, q)
            }
        };
        if p == 0 {
            (at(1) - at(0)) / h
        } else if p == n - 1 {
            (at(n - 1) - at(n - 2)) / h
        } else {
            (at(p + 1) - at(p - 1)) / (2.0 * h)
        }
    }

    /// Second space derivative `d^2/dx_a dx_b` with ghost extrapolation at
    /// the faces (pure second derivatives vanish there by construction).
    pub fn d2(&self, level: usize, i: usize, j: usize, a: usize, b: usize) -> f64 {
        let (ii, jj) = (i as isize, j as isize);
        if a == b {
            let h = self.grid.h(a);
            let (dp, dq) = if a == 0 { (1, 0) } else { (0, 1) };
            let up = self.ghost_value(level, ii + dp, jj + dq);
            let dn = self.ghost_value(level, ii - dp, jj - dq);
            (up - 2.0 * self.value(level, i, j) + dn) / (h * h)
        } else {
            let h1 = self.grid.h(0);
            let h2 = self.grid.h(1);
            (self.ghost_value(level, ii + 1, jj + 1) - self.ghost_value(level, ii + 1, jj - 1)
                - self.ghost_value(level, ii - 1, jj + 1)
                + self.ghost_value(level, ii - 1, jj - 1))
                / (4.0 * h1 * h2)
        }
    }

    /// Discrete time derivative across stored levels: three-point one-sided
    /// at the first and last level, central inside. Needs >= 3 levels.
    pub fn dt_node(&self, level: usize, i: usize, j: usize) -> Result<f64> {
        let n = self.n_levels();
        if n < 3 {
            return Err(Error::Grid(
                "time derivative needs at least three stored levels".into(),
            ));
        }
        let v = |l: usize| self.value(l, i, j);
        if level == 0 {
            let dt = self.times[1] - self.times[0];
            Ok((-3.0 * v(0) + 4.0 * v(1) - v(2)) / (2.0 * dt))
        } else if level == n - 1 {
            let dt = self.times[n - 1] - self.times[n - 2];
            Ok((3.0 * v(n - 1) - 4.0 * v(n - 2) + v(n - 3)) / (2.0 * dt))
        } else {
            let dt = self.times[level + 1] - self.times[level - 1];
            Ok((v(level + 1) - v(level - 1)) / dt)
        }
    }

    /// Gradient at a node: central differences, one-sided at edges.
    pub fn node_gradient(&self, level: usize, i: usize, j: usize) -> [f64; 2] {
        [self.d1(level, i, j, 0), self.d1(level, i, j, 1)]
    }

    fn space_weights(&self, x: Point) -> (usize, usize, f64, f64, bool) {
        let (xc, clipped) = self.grid.domain.clamp(x);
        let u = (xc[0] - self.grid.domain.lo[0]) / self.h0();
        let v = (xc[1] - self.grid.domain.lo[1]) / self.h1s();
        let i0 = (u.floor() as usize).min(self.grid.n1 - 2);
        let j0 = (v.floor() as usize).min(self.grid.n2 - 2);
        (i0, j0, u - i0 as f64, v - j0 as f64, clipped)
    }

    fn h0(&self) -> f64 {
        self.grid.h(0)
    }

    fn h1s(&self) -> f64 {
        self.grid.h(1)
    }

    fn bracket(&self, t: f64) -> (usize, usize, f64) {
        let n = self.n_levels();
        if n == 1 {
            return (0, 0, 0.0);
        }
        let tc = t.clamp(self.times[0], self.times[n - 1]);
        let hi = self.times.partition_point(|&tl| tl < tc).clamp(1, n - 1);
        let lo = hi - 1;
        let span = self.times[hi] - self.times[lo];
        let w = if span > 0.0 { (tc - self.times[lo]) / span } else { 0.0 };
        (lo, hi, w)
    }

    fn bilinear(&self, level: usize, i0: usize, j0: usize, fu: f64, fv: f64) -> f64 {
        let v00 = self.value(level, i0, j0);
        let v10 = self.value(level, i0 + 1, j0);
        let v01 = self.value(level, i0, j0 + 1);
        let v11 = self.value(level, i0 + 1, j0 + 1);
        v00 * (1.0 - fu) * (1.0 - fv)
            + v10 * fu * (1.0 - fv)
            + v01 * (1.0 - fu) * fv
            + v11 * fu * fv
    }

    /// Space-time interpolation, bilinear in space and linear in time.
    /// The flag reports whether `x` was clamped into the box.
    pub fn interpolate(&self, t: f64, x: Point) -> (f64, bool) {
        let (i0, j0, fu, fv, clipped) = self.space_weights(x);
        let (lo, hi, w) = self.bracket(t);
        let a = self.bilinear(lo, i0, j0, fu, fv);
        let b = self.bilinear(hi, i0, j0, fu, fv);
        (a * (1.0 - w) + b * w, clipped)
    }

    /// Interpolated gradient built from node gradients.
    pub fn grad_interpolate(&self, t: f64, x: Point) -> ([f64; 2], bool) {
        let (i0, j0, fu, fv, clipped) = self.space_weights(x);
        let (lo, hi, w) = self.bracket(t);
        let mut out = [0.0; 2];
        for axis in 0..2 {
            let blend = |level: usize| {
                let g00 = self.d1(level, i0, j0, axis);
                let g10 = self.d1(level, i0 + 1, j0, axis);
                let g01 = self.d1(level, i0, j0 + 1, axis);
                let g11 = self.d1(level, i0 + 1, j0 + 1, axis);
                g00 * (1.0 - fu) * (1.0 - fv)
                    + g10 * fu * (1.0 - fv)
                    + g01 * (1.0 - fu) * fv
                    + g11 * fu * fv
            };
            out[axis] = blend(lo) * (1.0 - w) + blend(hi) * w;
        }
        (out, clipped)
    }

    /// Writes the field as CSV rows `t,x1,x2,v`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,x1,x2,v")?;
        for l in 0..self.n_levels() {
            let t = self.times[l];
            for i in 0..self.grid.n1 {
                for j in 0..self.grid.n2 {
                    writeln!(
                        w,
                        "{},{},{},{}",
                        t,
                        self.grid.x1(i),
                        self.grid.x2(j),
                        self.value(l, i, j)
                    )?;
                }
            }
        }
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}
