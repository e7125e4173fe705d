//! Scalar coefficient fields on `[0,1] x R^2` with registered derivatives.
//!
//! Model coefficients expose closed-form partial derivatives rather than
//! numerical ones: the structural operators consume up to third x-derivatives
//! of `f` and second x-derivatives of the diffusion matrix, and differencing
//! those quantities would contaminate every residual downstream. Each field
//! advertises the orders it actually provides through [`DerivCaps`]; callers
//! check the flags before requesting a derivative.

use std::fmt;
use std::sync::Arc;

use crate::smooth1d::Smooth1d;
use crate::Point;

/// Derivative orders a field provides. `eval` is always available.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DerivCaps {
    /// First time derivative.
    pub dt: bool,
    /// First space derivatives.
    pub dx: bool,
    /// Second space derivatives.
    pub dxx: bool,
    /// Third space derivatives.
    pub dxxx: bool,
    /// Mixed time/space derivative `d^2/dt dx_j`.
    pub dt_dx: bool,
}

impl DerivCaps {
    pub const ALL: DerivCaps = DerivCaps {
        dt: true,
        dx: true,
        dxx: true,
        dxxx: true,
        dt_dx: true,
    };

    pub const NONE: DerivCaps = DerivCaps {
        dt: false,
        dx: false,
        dxx: false,
        dxxx: false,
        dt_dx: false,
    };
}

/// Scalar function of `(t, x)` with registered exact derivatives.
///
/// Implementations only need to return meaningful values for the orders they
/// advertise in [`ScalarField::caps`]; the default bodies return NaN so that
/// an unchecked call is loud in debug assertions rather than silently wrong.
pub trait ScalarField: Send + Sync {
    fn caps(&self) -> DerivCaps;

    fn eval(&self, t: f64, x: Point) -> f64;

    fn dt(&self, _t: f64, _x: Point) -> f64 {
        f64::NAN
    }

    /// `d/dx_j`, axes indexed 0 and 1.
    fn dx(&self, _j: usize, _t: f64, _x: Point) -> f64 {
        f64::NAN
    }

    /// `d^2/dx_j dx_k`.
    fn dxx(&self, _j: usize, _k: usize, _t: f64, _x: Point) -> f64 {
        f64::NAN
    }

    /// `d^3/dx_j dx_k dx_l`.
    fn dxxx(&self, _j: usize, _k: usize, _l: usize, _t: f64, _x: Point) -> f64 {
        f64::NAN
    }

    /// `d^2/dt dx_j`.
    fn dt_dx(&self, _j: usize, _t: f64, _x: Point) -> f64 {
        f64::NAN
    }
}

/// Named, shareable coefficient field.
#[derive(Clone)]
pub struct CoefficientField {
    name: String,
    field: Arc<dyn ScalarField>,
}

impl CoefficientField {
    pub fn new(name: impl Into<String>, field: impl ScalarField + 'static) -> Self {
        CoefficientField {
            name: name.into(),
            field: Arc::new(field),
        }
    }

    /// Constant field; all derivatives vanish.
    pub fn constant(name: impl Into<String>, c: f64) -> Self {
        CoefficientField::new(name, ConstantField(c))
    }

    /// Time-independent field `func(x_axis)`.
    pub fn along_axis(name: impl Into<String>, axis: usize, func: Smooth1d) -> Self {
        CoefficientField::new(name, AxisField { axis, func })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn caps(&self) -> DerivCaps {
        self.field.caps()
    }

    pub fn eval(&self, t: f64, x: Point) -> f64 {
        self.field.eval(t, x)
    }

    pub fn dt(&self, t: f64, x: Point) -> f64 {
        self.field.dt(t, x)
    }

    pub fn dx(&self, j: usize, t: f64, x: Point) -> f64 {
        self.field.dx(j, t, x)
    }

    pub fn dxx(&self, j: usize, k: usize, t: f64, x: Point) -> f64 {
        self.field.dxx(j, k, t, x)
    }

    pub fn dxxx(&self, j: usize, k: usize, l: usize, t: f64, x: Point) -> f64 {
        self.field.dxxx(j, k, l, t, x)
    }

    pub fn dt_dx(&self, j: usize, t: f64, x: Point) -> f64 {
        self.field.dt_dx(j, t, x)
    }
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CoefficientField({})", self.name)
    }
}

/// Constant in both time and space.
#[derive(Clone, Copy, Debug)]
pub struct ConstantField(pub f64);

impl ScalarField for ConstantField {
    fn caps(&self) -> DerivCaps {
        DerivCaps::ALL
    }

    fn eval(&self, _t: f64, _x: Point) -> f64 {
        self.0
    }

    fn dt(&self, _t: f64, _x: Point) -> f64 {
        0.0
    }

    fn dx(&self, _j: usize, _t: f64, _x: Point) -> f64 {
        0.0
    }

    fn dxx(&self, _j: usize, _k: usize, _t: f64, _x: Point) -> f64 {
        0.0
    }

    fn dxxx(&self, _j: usize, _k: usize, _l: usize, _t: f64, _x: Point) -> f64 {
        0.0
    }

    fn dt_dx(&self, _j: usize, _t: f64, _x: Point) -> f64 {
        0.0
    }
}

/// Time-independent function of a single coordinate.
#[derive(Clone, Debug)]
pub struct AxisField {
    pub axis: usize,
    pub func: Smooth1d,
}

impl ScalarField for AxisField {
    fn caps(&self) -> DerivCaps {
        DerivCaps::ALL
    }

    fn eval(&self, _t: f64, x: Point) -> f64 {
        self.func.eval(x[self.axis])
    }

    fn dt(&self, _t: f64, _x: Point) -> f64 {
        0.0
    }

    fn dx(&self, j: usize, _t: f64, x: Point) -> f64 {
        if j == self.axis {
            self.func.deriv(1, x[self.axis])
        } else {
            0.0
        }
    }

    fn dxx(&self, j: usize, k: usize, _t: f64, x: Point) -> f64 {
        if j == self.axis && k == self.axis {
            self.func.deriv(2, x[self.axis])
        } else {
            0.0
        }
    }

    fn dxxx(&self, j: usize, k: usize, l: usize, _t: f64, x: Point) -> f64 {
        if j == self.axis && k == self.axis && l == self.axis {
            self.func.deriv(3, x[self.axis])
        } else {
            0.0
        }
    }

    fn dt_dx(&self, _j: usize, _t: f64, _x: Point) -> f64 {
        0.0
    }
}

/// `offset + exp(rate t) * func(m + exp(-alpha t) x_2)`.
///
/// This is the shape every coefficient of the mean-reverting volatility model
/// takes after the change of variables to `(log price, scaled factor)`; the
/// inner argument `u = m + exp(-alpha t) x_2` recovers the original factor
/// level.
#[derive(Clone, Debug)]
pub struct ExpWarpField {
    pub offset: f64,
    pub rate: f64,
    pub alpha: f64,
    pub m: f64,
    pub func: Smooth1d,
}

impl ExpWarpField {
    fn inner(&self, t: f64, x: Point) -> f64 {
        self.m + (-self.alpha * t).exp() * x[1]
    }
}

impl ScalarField for ExpWarpField {
    fn caps(&self) -> DerivCaps {
        DerivCaps::ALL
    }

    fn eval(&self, t: f64, x: Point) -> f64 {
        self.offset + (self.rate * t).exp() * self.func.eval(self.inner(t, x))
    }

    fn dt(&self, t: f64, x: Point) -> f64 {
        let u = self.inner(t, x);
        // d/dt u = -alpha (u - m)
        (self.rate * t).exp()
            * (self.rate * self.func.eval(u) - self.alpha * (u - self.m) * self.func.deriv(1, u))
    }

    fn dx(&self, j: usize, t: f64, x: Point) -> f64 {
        if j != 1 {
            return 0.0;
        }
        (self.rate * t).exp() * (-self.alpha * t).exp() * self.func.deriv(1, self.inner(t, x))
    }

    fn dxx(&self, j: usize, k: usize, t: f64, x: Point) -> f64 {
        if j != 1 || k != 1 {
            return 0.0;
        }
        (self.rate * t).exp() * (-2.0 * self.alpha * t).exp() * self.func.deriv(2, self.inner(t, x))
    }

    fn dxxx(&self, j: usize, k: usize, l: usize, t: f64, x: Point) -> f64 {
        if j != 1 || k != 1 || l != 1 {
            return 0.0;
        }
        (self.rate * t).exp() * (-3.0 * self.alpha * t).exp() * self.func.deriv(3, self.inner(t, x))
    }

    fn dt_dx(&self, j: usize, t: f64, x: Point) -> f64 {
        if j != 1 {
            return 0.0;
        }
        let u = self.inner(t, x);
        (self.rate * t).exp()
            * (-self.alpha * t).exp()
            * ((self.rate - self.alpha) * self.func.deriv(1, u)
                - self.alpha * (u - self.m) * self.func.deriv(2, u))
    }
}

/// `scale * exp(alpha t) * y_part(m + exp(-alpha t) x_2) * p_part(x_1)`.
///
/// Drift contribution of a volatility risk premium `mu(p, y)` in transformed
/// coordinates, with `p` the log of the forward price; the only registered
/// field whose x_1 dependence is nontrivial.
#[derive(Clone, Debug)]
pub struct PremiumDriftField {
    pub scale: f64,
    pub alpha: f64,
    pub m: f64,
    pub y_part: Smooth1d,
    pub p_part: Smooth1d,
}

impl PremiumDriftField {
    fn parts(&self, t: f64, x: Point) -> (f64, f64) {
        let u = self.m + (-self.alpha * t).exp() * x[1];
        (self.scale * (self.alpha * t).exp(), u)
    }
}

impl ScalarField for PremiumDriftField {
    fn caps(&self) -> DerivCaps {
        DerivCaps {
            dt: true,
            dx: true,
            dxx: true,
            dxxx: true,
            dt_dx: false,
        }
    }

    fn eval(&self, t: f64, x: Point) -> f64 {
        let (e, u) = self.parts(t, x);
        e * self.y_part.eval(u) * self.p_part.eval(x[0])
    }

    fn dt(&self, t: f64, x: Point) -> f64 {
        let (e, u) = self.parts(t, x);
        let q = self.p_part.eval(x[0]);
        e * q * (self.alpha * self.y_part.eval(u)
            - self.alpha * (u - self.m) * self.y_part.deriv(1, u))
    }

    fn dx(&self, j: usize, t: f64, x: Point) -> f64 {
        let (e, u) = self.parts(t, x);
        let decay = (-self.alpha * t).exp();
        match j {
            0 => e * self.y_part.eval(u) * self.p_part.deriv(1, x[0]),
            _ => e * decay * self.y_part.deriv(1, u) * self.p_part.eval(x[0]),
        }
    }

    fn dxx(&self, j: usize, k: usize, t: f64, x: Point) -> f64 {
        let (e, u) = self.parts(t, x);
        let decay = (-self.alpha * t).exp();
        match (j.min(k), j.max(k)) {
            (0, 0) => e * self.y_part.eval(u) * self.p_part.deriv(2, x[0]),
            (0, 1) => e * decay * self.y_part.deriv(1, u) * self.p_part.deriv(1, x[0]),
            _ => e * decay * decay * self.y_part.deriv(2, u) * self.p_part.eval(x[0]),
        }
    }

    fn dxxx(&self, j: usize, k: usize, l: usize, t: f64, x: Point) -> f64 {
        let (e, u) = self.parts(t, x);
        let decay = (-self.alpha * t).exp();
        let ones = [j, k, l].iter().filter(|&&a| a == 1).count();
        match ones {
            0 => e * self.y_part.eval(u) * self.p_part.deriv(3, x[0]),
            1 => e * decay * self.y_part.deriv(1, u) * self.p_part.deriv(2, x[0]),
            2 => e * decay * decay * self.y_part.deriv(2, u) * self.p_part.deriv(1, x[0]),
            _ => e * decay * decay * decay * self.y_part.deriv(3, u) * self.p_part.eval(x[0]),
        }
    }
}

/// Entry `(j,k)` of `sigma sigma^T` derived from the sigma fields by the
/// product rule. Used by models that do not register the quadratic
/// coefficients in closed form; derivatives stop at second order.
#[derive(Clone)]
pub struct GramEntryField {
    pub sigma: [[CoefficientField; 2]; 2],
    pub j: usize,
    pub k: usize,
}

impl ScalarField for GramEntryField {
    fn caps(&self) -> DerivCaps {
        let mut caps = DerivCaps::ALL;
        for row in &self.sigma {
            for entry in row {
                let c = entry.caps();
                caps.dt &= c.dt;
                caps.dx &= c.dx;
                caps.dxx &= c.dxx;
            }
        }
        caps.dxxx = false;
        caps.dt_dx = false;
        caps
    }

    fn eval(&self, t: f64, x: Point) -> f64 {
        (0..2)
            .map(|m| self.sigma[self.j][m].eval(t, x) * self.sigma[self.k][m].eval(t, x))
            .sum()
    }

    fn dt(&self, t: f64, x: Point) -> f64 {
        (0..2)
            .map(|m| {
                self.sigma[self.j][m].dt(t, x) * self.sigma[self.k][m].eval(t, x)
                    + self.sigma[self.j][m].eval(t, x) * self.sigma[self.k][m].dt(t, x)
            })
            .sum()
    }

    fn dx(&self, p: usize, t: f64, x: Point) -> f64 {
        (0..2)
            .map(|m| {
                self.sigma[self.j][m].dx(p, t, x) * self.sigma[self.k][m].eval(t, x)
                    + self.sigma[self.j][m].eval(t, x) * self.sigma[self.k][m].dx(p, t, x)
            })
            .sum()
    }

    fn dxx(&self, p: usize, q: usize, t: f64, x: Point) -> f64 {
        (0..2)
            .map(|m| {
                let sj = &self.sigma[self.j][m];
                let sk = &self.sigma[self.k][m];
                sj.dxx(p, q, t, x) * sk.eval(t, x)
                    + sj.dx(p, t, x) * sk.dx(q, t, x)
                    + sj.dx(q, t, x) * sk.dx(p, t, x)
                    + sj.eval(t, x) * sk.dxx(p, q, t, x)
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_dx(f: &dyn ScalarField, j: usize, t: f64, x: Point, h: f64) -> f64 {
        let mut xp = x;
        let mut xm = x;
        xp[j] += h;
        xm[j] -= h;
        (f.eval(t, xp) - f.eval(t, xm)) / (2.0 * h)
    }

    fn fd_dt(f: &dyn ScalarField, t: f64, x: Point, h: f64) -> f64 {
        (f.eval(t + h, x) - f.eval(t - h, x)) / (2.0 * h)
    }

    #[test]
    fn exp_warp_derivatives_match_finite_differences() {
        let f = ExpWarpField {
            offset: 0.03,
            rate: 2.0,
            alpha: 1.0,
            m: 0.1,
            func: Smooth1d::ArctanSigmoid {
                base: 0.5,
                scale: 0.3,
            }
            .squared(),
        };
        let t = 0.4;
        let x = [0.3, -0.7];
        let h = 1e-5;

        assert!((f.dt(t, x) - fd_dt(&f, t, x, h)).abs() < 1e-7);
        assert!((f.dx(1, t, x) - fd_dx(&f, 1, t, x, h)).abs() < 1e-7);
        assert!(f.dx(0, t, x) == 0.0);

        let fd_dxx = (f.dx(1, t, [x[0], x[1] + h]) - f.dx(1, t, [x[0], x[1] - h])) / (2.0 * h);
        assert!((f.dxx(1, 1, t, x) - fd_dxx).abs() < 1e-7);

        let fd_dt_dx = (f.dx(1, t + h, x) - f.dx(1, t - h, x)) / (2.0 * h);
        assert!((f.dt_dx(1, t, x) - fd_dt_dx).abs() < 1e-7);

        let fd_dxxx = (f.dxx(1, 1, t, [x[0], x[1] + h]) - f.dxx(1, 1, t, [x[0], x[1] - h]))
            / (2.0 * h);
        assert!((f.dxxx(1, 1, 1, t, x) - fd_dxxx).abs() < 1e-6);
    }

    #[test]
    fn premium_drift_derivatives_match_finite_differences() {
        let f = PremiumDriftField {
            scale: -1.0,
            alpha: 1.0,
            m: 0.0,
            y_part: Smooth1d::TanhSigmoid {
                base: 0.0,
                scale: 0.2,
            },
            p_part: Smooth1d::Exp { rate: -1.0 },
        };
        let t = 0.6;
        let x = [0.2, 0.5];
        let h = 1e-5;

        assert!((f.dt(t, x) - fd_dt(&f, t, x, h)).abs() < 1e-7);
        for j in 0..2 {
            assert!(
                (f.dx(j, t, x) - fd_dx(&f, j, t, x, h)).abs() < 1e-7,
                "j={j}"
            );
        }
        for j in 0..2 {
            for k in 0..2 {
                let fd = {
                    let mut xp = x;
                    let mut xm = x;
                    xp[k] += h;
                    xm[k] -= h;
                    (f.dx(j, t, xp) - f.dx(j, t, xm)) / (2.0 * h)
                };
                assert!((f.dxx(j, k, t, x) - fd).abs() < 1e-7, "j={j}, k={k}");
            }
        }
        for (j, k, l) in [(0, 0, 0), (0, 0, 1), (0, 1, 1), (1, 1, 1)] {
            let fd = {
                let mut xp = x;
                let mut xm = x;
                xp[l] += h;
                xm[l] -= h;
                (f.dxx(j, k, t, xp) - f.dxx(j, k, t, xm)) / (2.0 * h)
            };
            assert!(
                (f.dxxx(j, k, l, t, x) - fd).abs() < 1e-6,
                "j={j}, k={k}, l={l}"
            );
        }
    }

    #[test]
    fn gram_entry_matches_products() {
        let s11 = CoefficientField::along_axis(
            "s11",
            1,
            Smooth1d::ArctanSigmoid {
                base: 0.5,
                scale: 0.3,
            },
        );
        let s12 = CoefficientField::constant("s12", 0.0);
        let s21 = CoefficientField::along_axis(
            "s21",
            1,
            Smooth1d::ArctanSigmoid {
                base: 0.1,
                scale: 0.05,
            },
        );
        let s22 = CoefficientField::constant("s22", 0.12);
        let sigma = [[s11.clone(), s12], [s21.clone(), s22]];

        let a12 = GramEntryField {
            sigma: sigma.clone(),
            j: 0,
            k: 1,
        };
        let t = 0.3;
        let x = [0.1, 0.4];
        let want = s11.eval(t, x) * s21.eval(t, x);
        assert!((a12.eval(t, x) - want).abs() < 1e-15);

        let h = 1e-5;
        assert!((a12.dx(1, t, x) - fd_dx(&a12, 1, t, x, h)).abs() < 1e-8);
        let fd_dxx = (a12.dx(1, t, [x[0], x[1] + h]) - a12.dx(1, t, [x[0], x[1] - h])) / (2.0 * h);
        assert!((a12.dxx(1, 1, t, x) - fd_dxx).abs() < 1e-7);
    }

    #[test]
    fn dxx_is_symmetric_in_axes() {
        let f = PremiumDriftField {
            scale: 2.0,
            alpha: 0.7,
            m: -0.2,
            y_part: Smooth1d::ArctanSigmoid {
                base: 0.3,
                scale: 0.2,
            },
            p_part: Smooth1d::TanhSigmoid {
                base: 1.0,
                scale: 0.5,
            },
        };
        for &(t, x) in &[(0.1, [0.0, 0.3]), (0.8, [-0.4, 1.1])] {
            assert_eq!(f.dxx(0, 1, t, x), f.dxx(1, 0, t, x));
        }
    }
}
