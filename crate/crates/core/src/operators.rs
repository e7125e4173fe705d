//! Generator of the state diffusion and the structural first-order operators.
//!
//! For a pair `(f, h)` of scalar fields write `J[f, h]` for the determinant
//! of the Jacobian of `(f, h)` in the space variables. The structural values
//! `(A, B, C)` are the coefficients of the second-order operator `P(t)` that
//! drives the evolution of `w = J[f, v]` along solutions `v` of the pricing
//! equation. Two sign conventions of the same objects circulate: the "market"
//! convention built from `(a, b, r)` directly, and the "generator" convention
//! built from `(a/2, b, -r)`. They are related entrywise by
//! `A_gen = A/2, B_gen = B, C_gen = -C`; both are exposed.

use crate::error::Error;
use crate::field::CoefficientField;
use crate::grid::ValueField;
use crate::mat2::Mat2;
use crate::model::DiffusionModel;
use crate::{Point, Result};

/// Pointwise structural coefficients `A^{jk}`, `B^j`, `C`.
#[derive(Clone, Copy, Debug)]
pub struct StructuralValues {
    pub a: Mat2,
    pub b: [f64; 2],
    pub c: f64,
}

impl StructuralValues {
    /// Generator-convention values `(A/2, B, -C)`.
    pub fn generator_convention(&self) -> StructuralValues {
        StructuralValues {
            a: Mat2([
                [0.5 * self.a.0[0][0], 0.5 * self.a.0[0][1]],
                [0.5 * self.a.0[1][0], 0.5 * self.a.0[1][1]],
            ]),
            b: self.b,
            c: -self.c,
        }
    }
}

fn require_caps(field: &CoefficientField, dx: bool, dxx: bool, dxxx: bool, dt_dx: bool) -> Result<()> {
    let caps = field.caps();
    let missing = |what: &str| {
        Err(Error::MissingDerivative(format!(
            "{} of `{}`",
            what,
            field.name()
        )))
    };
    if dx && !caps.dx {
        return missing("first x-derivative");
    }
    if dxx && !caps.dxx {
        return missing("second x-derivative");
    }
    if dxxx && !caps.dxxx {
        return missing("third x-derivative");
    }
    if dt_dx && !caps.dt_dx {
        return missing("mixed t,x derivative");
    }
    Ok(())
}

/// `J[f, h] = d1 f * d2 h - d2 f * d1 h` at `(t, x)`.
fn jac_det(f: &CoefficientField, h: &CoefficientField, t: f64, x: Point) -> f64 {
    f.dx(0, t, x) * h.dx(1, t, x) - f.dx(1, t, x) * h.dx(0, t, x)
}

/// `d/dx_k J[f, h]`.
fn jac_det_dk(f: &CoefficientField, h: &CoefficientField, k: usize, t: f64, x: Point) -> f64 {
    f.dxx(0, k, t, x) * h.dx(1, t, x) + f.dx(0, t, x) * h.dxx(1, k, t, x)
        - f.dxx(1, k, t, x) * h.dx(0, t, x)
        - f.dx(1, t, x) * h.dxx(0, k, t, x)
}

/// Structural values in the market convention at `(t, x)`:
/// `A^{jk} = J[f, a^{jk}] - 2 (-1)^j (H[f] a)^{(3-j)k}`,
/// `B^j = J[f, b^j] - (-1)^j (d_t + L - r) d_{3-j} f`,
/// `C = J[f, r]`,
/// with axes written 1-based and `H[f]` the spatial Hessian of `f`.
pub fn structural_values(
    model: &DiffusionModel,
    f: &CoefficientField,
    t: f64,
    x: Point,
) -> Result<StructuralValues> {
    require_caps(f, true, true, true, true)?;
    for row in &model.a {
        for entry in row {
            require_caps(entry, true, false, false, false)?;
        }
    }
    require_caps(&model.b[0], true, false, false, false)?;
    require_caps(&model.b[1], true, false, false, false)?;
    require_caps(&model.r, true, false, false, false)?;

    let c = model.eval_coeffs(t, x)?;
    let hess = Mat2([
        [f.dxx(0, 0, t, x), f.dxx(0, 1, t, x)],
        [f.dxx(1, 0, t, x), f.dxx(1, 1, t, x)],
    ]);
    let ha = hess.mul(&c.a);

    let mut a_vals = Mat2::ZERO;
    let mut b_vals = [0.0; 2];
    for j in 0..2 {
        // (-1)^(j+1) for 1-based j.
        let sign = if j == 0 { -1.0 } else { 1.0 };
        let other = 1 - j;
        for k in 0..2 {
            a_vals.0[j][k] = jac_det(f, &model.a[j][k], t, x) - 2.0 * sign * ha.0[other][k];
        }
        // (d_t + L - r) applied to d_{other} f.
        let mut l_df = 0.0;
        for q in 0..2 {
            for s in 0..2 {
                l_df += 0.5 * c.a.0[q][s] * f.dxxx(q, s, other, t, x);
            }
            l_df += c.b[q] * f.dxx(q, other, t, x);
        }
        let evolved = f.dt_dx(other, t, x) + l_df - c.r * f.dx(other, t, x);
        b_vals[j] = jac_det(f, &model.b[j], t, x) - sign * evolved;
    }

    Ok(StructuralValues {
        a: a_vals,
        b: b_vals,
        c: jac_det(f, &model.r, t, x),
    })
}

/// Row divergence `sum_k d/dx_k A^{jk}` of the market-convention `A`.
pub fn structural_divergence(
    model: &DiffusionModel,
    f: &CoefficientField,
    t: f64,
    x: Point,
) -> Result<[f64; 2]> {
    require_caps(f, true, true, true, false)?;
    for row in &model.a {
        for entry in row {
            require_caps(entry, true, true, false, false)?;
        }
    }

    let mut out = [0.0; 2];
    for j in 0..2 {
        let sign = if j == 0 { -1.0 } else { 1.0 };
        let other = 1 - j;
        let mut acc = 0.0;
        for k in 0..2 {
            // d_k of (H[f] a)^{other,k}.
            let mut d_ha = 0.0;
            for m in 0..2 {
                d_ha += f.dxxx(other, m, k, t, x) * model.a[m][k].eval(t, x)
                    + f.dxx(other, m, t, x) * model.a[m][k].dx(k, t, x);
            }
            acc += jac_det_dk(f, &model.a[j][k], k, t, x) - 2.0 * sign * d_ha;
        }
        out[j] = acc;
    }
    Ok(out)
}

/// Applies the generator `L = 1/2 sum a^{jk} d2_{jk} + sum b^j d_j` to a
/// stored level of `field`, using the field's discrete derivatives.
pub fn generator_apply(model: &DiffusionModel, field: &ValueField, t: f64) -> Result<ValueField> {
    let level = field.level_at(t)?;
    let grid = field.grid.clone();
    let mut out = Vec::with_capacity(grid.n1 * grid.n2);
    for i in 0..grid.n1 {
        for j in 0..grid.n2 {
            let x = grid.node(i, j);
            let c = model.eval_coeffs(t, x)?;
            let mut acc = 0.0;
            acc += 0.5 * c.a.0[0][0] * field.d2(level, i, j, 0, 0);
            acc += 0.5 * c.a.0[1][1] * field.d2(level, i, j, 1, 1);
            acc += c.a.0[0][1] * field.d2(level, i, j, 0, 1);
            acc += c.b[0] * field.d1(level, i, j, 0);
            acc += c.b[1] * field.d1(level, i, j, 1);
            out.push(acc);
        }
    }
    let mut single = grid;
    single.n_t = 1;
    ValueField::new(single, vec![t], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{AxisField, ConstantField};
    use crate::smooth1d::Smooth1d;

    /// Constant coefficients with `f = x1` and zero rate: every structural
    /// value vanishes identically.
    #[test]
    fn structural_values_vanish_for_linear_f_constant_coefficients() {
        let mut model = DiffusionModel::constant_vol(0.3, 0.1, 0.2, 0.0, 1.0, 1.0, 0.0).unwrap();
        model.f = CoefficientField::along_axis("f", 0, Smooth1d::Affine { a: 0.0, b: 1.0 });
        let f = model.f.clone();
        for &(t, x) in &[(0.0, [0.2, -0.4]), (0.7, [-1.0, 0.9]), (1.0, [0.0, 0.0])] {
            let s = structural_values(&model, &f, t, x).unwrap();
            for j in 0..2 {
                assert_eq!(s.b[j], 0.0, "B^{j} at ({t}, {x:?})");
                for k in 0..2 {
                    assert_eq!(s.a.0[j][k], 0.0, "A^{j}{k} at ({t}, {x:?})");
                }
            }
            assert_eq!(s.c, 0.0);
            let div = structural_divergence(&model, &f, t, x).unwrap();
            assert_eq!(div, [0.0, 0.0]);
        }
    }

    /// Central-difference oracle for the divergence of `A`.
    #[test]
    fn divergence_matches_finite_differences_of_structural_a() {
        let nu = Smooth1d::ArctanSigmoid {
            base: 0.5,
            scale: 0.3,
        };
        let mut model = DiffusionModel::constant_vol(0.3, 0.1, 0.2, 0.0, 1.0, 1.0, 0.0).unwrap();
        // Make the quadratic coefficients genuinely x2-dependent.
        model.sigma[0][0] = CoefficientField::along_axis("sigma11", 1, nu.clone());
        model.a[0][0] = CoefficientField::along_axis("a11", 1, nu.clone().squared());
        model.a[0][1] = CoefficientField::along_axis("a12", 1, nu.clone().scaled(0.1));
        model.a[1][0] = CoefficientField::along_axis("a21", 1, nu.clone().scaled(0.1));

        let f = model.f.clone();
        let t = 1.0;
        let x = [0.3, 0.2];
        let h = 1e-5;
        let div = structural_divergence(&model, &f, t, x).unwrap();
        for j in 0..2 {
            let mut fd = 0.0;
            for k in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[k] += h;
                xm[k] -= h;
                let ap = structural_values(&model, &f, t, xp).unwrap().a.0[j][k];
                let am = structural_values(&model, &f, t, xm).unwrap().a.0[j][k];
                fd += (ap - am) / (2.0 * h);
            }
            assert!(
                (div[j] - fd).abs() < 1e-6 * (1.0 + fd.abs()),
                "j={j}: analytic={}, fd={fd}",
                div[j]
            );
        }
    }

    #[test]
    fn generator_of_quadratic_is_exact() {
        // v = x1^2 + x2^2, unit diffusion, zero drift: L v = 2.
        let model = DiffusionModel::independent_axes();
        let grid = crate::grid::SpaceTimeGrid::new(
            crate::grid::DomainBox::new([-1.0, -1.0], [1.0, 1.0]).unwrap(),
            9,
            9,
            2,
            0.5,
            0,
        )
        .unwrap();
        let times = grid.times();
        let mut values = Vec::new();
        for _ in &times {
            for i in 0..grid.n1 {
                for j in 0..grid.n2 {
                    let x = grid.node(i, j);
                    values.push(x[0] * x[0] + x[1] * x[1]);
                }
            }
        }
        let field = ValueField::new(grid, times, values).unwrap();
        let lv = generator_apply(&model, &field, 0.5).unwrap();
        // Interior nodes: second differences of a quadratic are exact.
        for i in 1..8 {
            for j in 1..8 {
                assert!(
                    (lv.value(0, i, j) - 2.0).abs() < 1e-12,
                    "node ({i},{j}): {}",
                    lv.value(0, i, j)
                );
            }
        }
    }

    #[test]
    fn missing_third_derivative_is_a_capability_error() {
        #[derive(Debug)]
        struct NoThird;
        impl crate::field::ScalarField for NoThird {
            fn caps(&self) -> crate::field::DerivCaps {
                crate::field::DerivCaps {
                    dxxx: false,
                    ..crate::field::DerivCaps::ALL
                }
            }
            fn eval(&self, _t: f64, x: Point) -> f64 {
                x[0]
            }
            fn dt(&self, _t: f64, _x: Point) -> f64 {
                0.0
            }
            fn dx(&self, j: usize, _t: f64, _x: Point) -> f64 {
                if j == 0 {
                    1.0
                } else {
                    0.0
                }
            }
            fn dxx(&self, _j: usize, _k: usize, _t: f64, _x: Point) -> f64 {
                0.0
            }
            fn dt_dx(&self, _j: usize, _t: f64, _x: Point) -> f64 {
                0.0
            }
        }
        let model = DiffusionModel::independent_axes();
        let f = CoefficientField::new("f", NoThird);
        let err = structural_values(&model, &f, 0.5, [0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::MissingDerivative(_)), "{err}");
        assert!(err.to_string().contains("third x-derivative"));
    }

    #[test]
    fn generator_convention_is_half_a_same_b_minus_c() {
        let model =
            DiffusionModel::constant_vol(0.25, 0.05, 0.15, 0.02, 1.1, 1.0, 0.0).unwrap();
        let f = model.f.clone();
        let s2 = structural_values(&model, &f, 0.5, [0.1, -0.2]).unwrap();
        let s4 = s2.generator_convention();
        for j in 0..2 {
            assert_eq!(s4.b[j], s2.b[j]);
            for k in 0..2 {
                assert_eq!(s4.a.0[j][k], 0.5 * s2.a.0[j][k]);
            }
        }
        assert_eq!(s4.c, -s2.c);
    }

    #[test]
    fn constant_field_capability_fallbacks() {
        let f = ConstantField(3.0);
        let g = AxisField {
            axis: 0,
            func: Smooth1d::Exp { rate: 1.0 },
        };
        use crate::field::ScalarField;
        assert_eq!(f.dxxx(0, 0, 0, 0.5, [1.0, 2.0]), 0.0);
        assert_eq!(g.dt_dx(0, 0.5, [1.0, 2.0]), 0.0);
    }
}
