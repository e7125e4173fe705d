//! Discrete residual diagnostics for solved value fields.
//!
//! `pde_residual` measures how well a stored field satisfies
//! `d_t v + L v - r v = 0` with `L = 1/2 sum a^{jk} d2_{jk} + sum b^j d_j`,
//! using the field's own centered stencils. `derivative_pde_residual`
//! measures the analogous equation for a coordinate derivative of the field,
//! which picks up a source term built from the coefficient gradients:
//! `d_t v_j + (L - r) v_j + 1/2 sum d_j a^{mk} d2_{mk} v
//!  + sum d_j b^m d_m v - d_j r v = 0`.
//! Both statistics are taken over a time window and an interior node margin,
//! keeping the low-order boundary stencils out of the sample.

use crate::grid::ValueField;
use crate::model::DiffusionModel;
use crate::{Error, Point, Result};

/// Aggregate of a residual sweep.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ResidualStats {
    pub rms: f64,
    pub max_abs: f64,
    pub n: usize,
    pub worst_t: f64,
    pub worst_x: Point,
}

fn window_levels(v: &ValueField, t_lo: f64, t_hi: f64) -> Result<Vec<usize>> {
    let levels: Vec<usize> = v
        .times()
        .iter()
        .enumerate()
        .filter(|(l, &t)| {
            t >= t_lo - 1e-12 && t <= t_hi + 1e-12 && *l > 0 && *l + 1 < v.n_levels()
        })
        .map(|(l, _)| l)
        .collect();
    if levels.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no interior time levels inside window [{t_lo}, {t_hi}]"
        )));
    }
    Ok(levels)
}

fn check_margin(v: &ValueField, margin: usize) -> Result<()> {
    let g = &v.grid;
    if 2 * margin + 1 >= g.n1 || 2 * margin + 1 >= g.n2 {
        return Err(Error::InvalidInput(format!(
            "space margin {margin} leaves no interior nodes on a {}x{} grid",
            g.n1, g.n2
        )));
    }
    Ok(())
}

struct Accum {
    sum_sq: f64,
    max_abs: f64,
    n: usize,
    worst_t: f64,
    worst_x: Point,
}

impl Accum {
    fn new() -> Self {
        Accum {
            sum_sq: 0.0,
            max_abs: 0.0,
            n: 0,
            worst_t: 0.0,
            worst_x: [0.0, 0.0],
        }
    }
    fn push(&mut self, r: f64, t: f64, x: Point) {
        self.sum_sq += r * r;
        self.n += 1;
        if r.abs() > self.max_abs {
            self.max_abs = r.abs();
            self.worst_t = t;
            self.worst_x = x;
        }
    }
    fn finish(self) -> ResidualStats {
        ResidualStats {
            rms: (self.sum_sq / self.n as f64).sqrt(),
            max_abs: self.max_abs,
            n: self.n,
            worst_t: self.worst_t,
            worst_x: self.worst_x,
        }
    }
}

/// Root-mean-square and maximum of the discrete pricing-equation residual
/// over `t` in `[t_lo, t_hi]` and nodes at least `margin` away from the faces.
pub fn pde_residual(
    model: &DiffusionModel,
    v: &ValueField,
    t_lo: f64,
    t_hi: f64,
    margin: usize,
) -> Result<ResidualStats> {
    check_margin(v, margin)?;
    let levels = window_levels(v, t_lo, t_hi)?;
    let g = &v.grid;
    let mut acc = Accum::new();
    for &l in &levels {
        let t = v.times()[l];
        for i in margin..g.n1 - margin {
            for j in margin..g.n2 - margin {
                let x = g.node(i, j);
                let c = model.eval_coeffs(t, x)?;
                let lv = 0.5 * c.a.0[0][0] * v.d2(l, i, j, 0, 0)
                    + 0.5 * c.a.0[1][1] * v.d2(l, i, j, 1, 1)
                    + 0.5 * (c.a.0[0][1] + c.a.0[1][0]) * v.d2(l, i, j, 0, 1)
                    + c.b[0] * v.d1(l, i, j, 0)
                    + c.b[1] * v.d1(l, i, j, 1);
                let res = v.dt_node(l, i, j)? + lv - c.r * v.value(l, i, j);
                acc.push(res, t, x);
            }
        }
    }
    Ok(acc.finish())
}

fn require_dx(field: &crate::field::CoefficientField) -> Result<()> {
    if !field.caps().dx {
        return Err(Error::MissingDerivative(format!(
            "first x-derivative of `{}`",
            field.name()
        )));
    }
    Ok(())
}

/// Residual of the pricing equation satisfied by the coordinate derivative
/// `d_axis v`, including the coefficient-gradient source term.
pub fn derivative_pde_residual(
    model: &DiffusionModel,
    v: &ValueField,
    axis: usize,
    t_lo: f64,
    t_hi: f64,
    margin: usize,
) -> Result<ResidualStats> {
    if axis > 1 {
        return Err(Error::InvalidInput(format!(
            "derivative axis must be 0 or 1, got {axis}"
        )));
    }
    check_margin(v, margin)?;
    for row in &model.a {
        for f in row {
            require_dx(f)?;
        }
    }
    require_dx(&model.b[0])?;
    require_dx(&model.b[1])?;
    require_dx(&model.r)?;

    let levels = window_levels(v, t_lo, t_hi)?;
    let g = &v.grid;

    // Nodal sheet of the coordinate derivative, wrapped as a field so the
    // same stencils apply to it.
    let mut dvals = Vec::with_capacity(v.n_levels() * g.n1 * g.n2);
    for l in 0..v.n_levels() {
        for i in 0..g.n1 {
            for j in 0..g.n2 {
                dvals.push(v.d1(l, i, j, axis));
            }
        }
    }
    let dv = ValueField::new(g.clone(), v.times().to_vec(), dvals)?;

    let mut acc = Accum::new();
    for &l in &levels {
        let t = v.times()[l];
        for i in margin..g.n1 - margin {
            for j in margin..g.n2 - margin {
                let x = g.node(i, j);
                let c = model.eval_coeffs(t, x)?;
                let lv = 0.5 * c.a.0[0][0] * dv.d2(l, i, j, 0, 0)
                    + 0.5 * c.a.0[1][1] * dv.d2(l, i, j, 1, 1)
                    + 0.5 * (c.a.0[0][1] + c.a.0[1][0]) * dv.d2(l, i, j, 0, 1)
                    + c.b[0] * dv.d1(l, i, j, 0)
                    + c.b[1] * dv.d1(l, i, j, 1);
                let mut source = 0.0;
                for m in 0..2 {
                    for k in 0..2 {
                        source += 0.5 * model.a[m][k].dx(axis, t, x) * v.d2(l, i, j, m, k);
                    }
                    source += model.b[m].dx(axis, t, x) * v.d1(l, i, j, m);
                }
                source -= model.r.dx(axis, t, x) * v.value(l, i, j);
                let res =
                    dv.dt_node(l, i, j)? + lv - c.r * dv.value(l, i, j) + source;
                acc.push(res, t, x);
            }
        }
    }
    Ok(acc.finish())
}
