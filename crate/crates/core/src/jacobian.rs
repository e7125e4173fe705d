//! Jacobian-determinant diagnostics for a solved derivative price field.
//!
//! For the pair (forward payoff field `f`, solved field `v`) the determinant
//! `w = d1 f d2 v - d2 f d1 v` measures whether the two price gradients span
//! the plane. Alongside `w` we track the scale `s = |grad f| |grad v|`, so
//! near-singularity can be judged relative to the local gradient sizes
//! instead of against an absolute cutoff.
//!
//! When `v` solves the pricing equation, `w` itself solves a drift-adjusted
//! evolution equation whose source is the structural second-order operator
//! applied to `v`; `determinant_evolution_residual` measures how well the
//! stored field satisfies that identity.

use crate::grid::ValueField;
use crate::model::DiffusionModel;
use crate::operators::structural_values;
use crate::residuals::ResidualStats;
use crate::{Error, Result};

/// Determinant and gradient-scale fields on the same grid as the source.
#[derive(Debug, Clone)]
pub struct JacobianField {
    pub w: ValueField,
    pub s: ValueField,
}

/// Evaluates `w = J[f, v]` and `s = |grad f| |grad v|` at every node, with
/// the forward gradient taken analytically and the solved gradient from
/// centered differences.
pub fn jacobian_field(model: &DiffusionModel, v: &ValueField) -> Result<JacobianField> {
    if !model.f.caps().dx {
        return Err(Error::MissingDerivative(format!(
            "first x-derivative of `{}`",
            model.f.name()
        )));
    }
    let g = &v.grid;
    let n = v.n_levels() * g.n1 * g.n2;
    let mut wv = Vec::with_capacity(n);
    let mut sv = Vec::with_capacity(n);
    for l in 0..v.n_levels() {
        let t = v.times()[l];
        for i in 0..g.n1 {
            for j in 0..g.n2 {
                let x = g.node(i, j);
                let fg = [model.f.dx(0, t, x), model.f.dx(1, t, x)];
                let vg = [v.d1(l, i, j, 0), v.d1(l, i, j, 1)];
                wv.push(fg[0] * vg[1] - fg[1] * vg[0]);
                sv.push(fg[0].hypot(fg[1]) * vg[0].hypot(vg[1]));
            }
        }
    }
    Ok(JacobianField {
        w: ValueField::new(g.clone(), v.times().to_vec(), wv)?,
        s: ValueField::new(g.clone(), v.times().to_vec(), sv)?,
    })
}

impl JacobianField {
    /// Fraction of nodes at `level` where `|w| <= tol_rel * s`. A zero scale
    /// counts as singular: both gradients vanishing spans nothing.
    pub fn near_singular_fraction(&self, level: usize, tol_rel: f64) -> f64 {
        let g = &self.w.grid;
        let mut hits = 0usize;
        for i in 0..g.n1 {
            for j in 0..g.n2 {
                if self.w.value(level, i, j).abs() <= tol_rel * self.s.value(level, i, j) {
                    hits += 1;
                }
            }
        }
        hits as f64 / (g.n1 * g.n2) as f64
    }

    /// Writes `t,x1,x2,w,s` rows for every node and level.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["t", "x1", "x2", "w", "s"])?;
        let g = &self.w.grid;
        for l in 0..self.w.n_levels() {
            let t = self.w.times()[l];
            for i in 0..g.n1 {
                for j in 0..g.n2 {
                    let x = g.node(i, j);
                    wtr.write_record([
                        t.to_string(),
                        x[0].to_string(),
                        x[1].to_string(),
                        self.w.value(l, i, j).to_string(),
                        self.s.value(l, i, j).to_string(),
                    ])?;
                }
            }
        }
        wtr.flush().map_err(std::io::Error::from)?;
        Ok(())
    }
}

/// Residual of the determinant evolution identity
/// `d_t w + L w - 2 r w + P v = 0`, where `P` is the structural operator in
/// generator convention, over a time window and interior margin.
pub fn determinant_evolution_residual(
    model: &DiffusionModel,
    v: &ValueField,
    t_lo: f64,
    t_hi: f64,
    margin: usize,
) -> Result<ResidualStats> {
    let jf = jacobian_field(model, v)?;
    let w = &jf.w;
    let g = &v.grid;
    if 2 * margin + 1 >= g.n1 || 2 * margin + 1 >= g.n2 {
        return Err(Error::InvalidInput(format!(
            "space margin {margin} leaves no interior nodes on a {}x{} grid",
            g.n1, g.n2
        )));
    }
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

    let mut sum_sq = 0.0;
    let mut max_abs = 0.0f64;
    let mut worst_t = 0.0;
    let mut worst_x = [0.0, 0.0];
    let mut count = 0usize;
    for &l in &levels {
        let t = v.times()[l];
        for i in margin..g.n1 - margin {
            for j in margin..g.n2 - margin {
                let x = g.node(i, j);
                let c = model.eval_coeffs(t, x)?;
                let lw = 0.5 * c.a.0[0][0] * w.d2(l, i, j, 0, 0)
                    + 0.5 * c.a.0[1][1] * w.d2(l, i, j, 1, 1)
                    + 0.5 * (c.a.0[0][1] + c.a.0[1][0]) * w.d2(l, i, j, 0, 1)
                    + c.b[0] * w.d1(l, i, j, 0)
                    + c.b[1] * w.d1(l, i, j, 1);
                let sv = structural_values(model, &model.f, t, x)?.generator_convention();
                let mut pv = sv.c * v.value(l, i, j);
                for m in 0..2 {
                    for k in 0..2 {
                        pv += sv.a.0[m][k] * v.d2(l, i, j, m, k);
                    }
                    pv += sv.b[m] * v.d1(l, i, j, m);
                }
                let res = w.dt_node(l, i, j)? + lw - 2.0 * c.r * w.value(l, i, j) + pv;
                sum_sq += res * res;
                count += 1;
                if res.abs() > max_abs {
                    max_abs = res.abs();
                    worst_t = t;
                    worst_x = x;
                }
            }
        }
    }
    Ok(ResidualStats {
        rms: (sum_sq / count as f64).sqrt(),
        max_abs,
        n: count,
        worst_t,
        worst_x,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{DomainBox, SpaceTimeGrid};

    fn exp_solution_field(
        grid: &SpaceTimeGrid,
        c1: f64,
        c2: f64,
        lambda: f64,
    ) -> ValueField {
        let times = grid.times();
        let mut vals = Vec::with_capacity(times.len() * grid.n1 * grid.n2);
        for &t in &times {
            for i in 0..grid.n1 {
                for j in 0..grid.n2 {
                    let x = grid.node(i, j);
                    vals.push((c1 * x[0] + c2 * x[1] + lambda * (1.0 - t)).exp());
                }
            }
        }
        ValueField::new(grid.clone(), times, vals).unwrap()
    }

    /// For an exact solution of the pricing equation the evolution identity
    /// holds analytically, so the discrete residual is pure truncation and
    /// shrinks near-quadratically under refinement.
    #[test]
    fn evolution_residual_is_truncation_for_exact_solution() {
        let model = DiffusionModel::constant_vol(0.4, 0.1, 0.3, 0.05, 1.0, 1.0, 0.0).unwrap();
        let a = [[0.16, 0.04], [0.04, 0.1]];
        let b = [0.05 - 0.08, 0.0];
        let (c1, c2) = (0.5, 0.4);
        let lambda = 0.5
            * (a[0][0] * c1 * c1 + 2.0 * a[0][1] * c1 * c2 + a[1][1] * c2 * c2)
            + b[0] * c1
            + b[1] * c2
            - 0.05;
        let domain = DomainBox::new([-1.5, -1.5], [1.5, 1.5]).unwrap();
        let coarse = SpaceTimeGrid::new(domain, 33, 33, 16, 0.5, 0).unwrap();
        let fine = coarse.refined(2);

        let rc = determinant_evolution_residual(
            &model,
            &exp_solution_field(&coarse, c1, c2, lambda),
            0.1,
            0.9,
            2,
        )
        .unwrap();
        let rf = determinant_evolution_residual(
            &model,
            &exp_solution_field(&fine, c1, c2, lambda),
            0.1,
            0.9,
            4,
        )
        .unwrap();
        assert!(rc.rms > 0.0, "coarse residual should be nonzero");
        let ratio = rc.rms / rf.rms;
        assert!(
            ratio > 3.0,
            "expected near-quadratic decay, got coarse {} / fine {} = {ratio}",
            rc.rms,
            rf.rms
        );
    }

    #[test]
    fn near_singular_fraction_detects_degenerate_direction() {
        let model = DiffusionModel::constant_vol(0.3, 0.0, 0.2, 0.0, 1.0, 1.0, 0.0).unwrap();
        let domain = DomainBox::new([-1.0, -1.0], [1.0, 1.0]).unwrap();
        let grid = SpaceTimeGrid::new(domain, 9, 9, 2, 0.5, 0).unwrap();
        let times = grid.times();
        let n = times.len() * grid.n1 * grid.n2;

        // v depending only on x2: gradients of f and v are orthogonal, so w
        // stays away from zero.
        let mut vals = Vec::with_capacity(n);
        for &_t in &times {
            for i in 0..grid.n1 {
                for j in 0..grid.n2 {
                    vals.push(2.0 * grid.node(i, j)[1]);
                }
            }
        }
        let v = ValueField::new(grid.clone(), times.clone(), vals).unwrap();
        let jf = jacobian_field(&model, &v).unwrap();
        assert_eq!(
            jf.near_singular_fraction(0, 1e-6),
            0.0,
            "transverse gradients should never be near-singular"
        );

        // v depending only on x1: collinear with grad f, so w vanishes.
        let mut vals = Vec::with_capacity(n);
        for &_t in &times {
            for i in 0..grid.n1 {
                for j in 0..grid.n2 {
                    vals.push(3.0 * grid.node(i, j)[0]);
                }
            }
        }
        let v = ValueField::new(grid.clone(), times.clone(), vals).unwrap();
        let jf = jacobian_field(&model, &v).unwrap();
        assert_eq!(
            jf.near_singular_fraction(0, 1e-6),
            1.0,
            "collinear gradients should be singular everywhere"
        );
    }

    #[test]
    fn csv_export_has_expected_shape() {
        let model = DiffusionModel::constant_vol(0.3, 0.0, 0.2, 0.0, 1.0, 1.0, 0.0).unwrap();
        let domain = DomainBox::new([-1.0, -1.0], [1.0, 1.0]).unwrap();
        let grid = SpaceTimeGrid::new(domain, 5, 4, 2, 0.5, 0).unwrap();
        let times = grid.times();
        let vals = vec![1.0; times.len() * grid.n1 * grid.n2];
        let v = ValueField::new(grid.clone(), times, vals).unwrap();
        let jf = jacobian_field(&model, &v).unwrap();
        let mut buf = Vec::new();
        jf.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,x1,x2,w,s");
        assert_eq!(lines.len(), 1 + 3 * 5 * 4, "one row per node and level");
    }
}
