//! The two-asset diffusion market model and its assumption checks.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::field::{CoefficientField, GramEntryField};
use crate::grid::DomainBox;
use crate::mat2::Mat2;
use crate::payoff::Payoff;
use crate::probes;
use crate::smooth1d::Smooth1d;
use crate::{Point, Result};

/// Trading horizon; the model lives on `[0, 1]`.
pub const HORIZON: f64 = 1.0;

/// Bounds the model declares about itself and that the validator probes.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EnvelopeConstants {
    /// Frobenius bound on `sigma^{-1}` over the domain.
    pub n_inv: f64,
    /// Growth rate `N` in the payoff gradient bound `|dg| <= e^{N(1+|x|)}`.
    pub n_growth: f64,
}

/// Marker that the model has the reduced structure for which the pairing
/// against a vertical-kink payoff admits a one-dimensional closed form:
/// `f` a function of `x1` alone with `f' = f`, quadratic coefficients
/// depending on `x2` only at the horizon, constant short rate, and drift
/// satisfying `b1 = rate - a11 / 2`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ReducedCallForm {
    pub gamma: f64,
    pub rate: f64,
}

/// Market model: state drift and volatility, short rate, the forward-asset
/// generator `f` and the derivative payoff `g`.
#[derive(Clone, Debug)]
pub struct DiffusionModel {
    pub name: String,
    pub b: [CoefficientField; 2],
    pub sigma: [[CoefficientField; 2]; 2],
    /// `a = sigma sigma^T`, registered with its own derivatives.
    pub a: [[CoefficientField; 2]; 2],
    pub r: CoefficientField,
    pub f: CoefficientField,
    pub g: Payoff,
    pub x0: Point,
    pub envelope: EnvelopeConstants,
    pub reduced_call: Option<ReducedCallForm>,
}

/// Pointwise coefficient values with finiteness already checked.
#[derive(Clone, Copy, Debug)]
pub struct Coeffs {
    pub b: [f64; 2],
    pub sigma: Mat2,
    pub a: Mat2,
    pub r: f64,
}

impl DiffusionModel {
    /// Evaluates all coefficients at `(t, x)`, rejecting non-finite values.
    pub fn eval_coeffs(&self, t: f64, x: Point) -> Result<Coeffs> {
        let check = |name: &str, value: f64| -> Result<f64> {
            if value.is_finite() {
                Ok(value)
            } else {
                Err(Error::NonFiniteCoefficient {
                    name: name.to_string(),
                    value,
                    t,
                    x1: x[0],
                    x2: x[1],
                })
            }
        };
        let mut sigma = Mat2::ZERO;
        let mut a = Mat2::ZERO;
        for j in 0..2 {
            for k in 0..2 {
                sigma.0[j][k] = check(self.sigma[j][k].name(), self.sigma[j][k].eval(t, x))?;
                a.0[j][k] = check(self.a[j][k].name(), self.a[j][k].eval(t, x))?;
            }
        }
        Ok(Coeffs {
            b: [
                check(self.b[0].name(), self.b[0].eval(t, x))?,
                check(self.b[1].name(), self.b[1].eval(t, x))?,
            ],
            sigma,
            a,
            r: check(self.r.name(), self.r.eval(t, x))?,
        })
    }

    /// Rough simulation box: `k_sd` standard deviations around the initial
    /// point, estimated from the volatility rows along `t` at `x0`, plus the
    /// drift displacement.
    pub fn default_domain(&self, k_sd: f64) -> Result<DomainBox> {
        let steps = 32;
        let mut var = [0.0f64; 2];
        let mut drift = [0.0f64; 2];
        for s in 0..steps {
            let t = (s as f64 + 0.5) / steps as f64;
            let c = self.eval_coeffs(t, self.x0)?;
            for axis in 0..2 {
                let row = c.sigma.row(axis);
                var[axis] += (row[0] * row[0] + row[1] * row[1]) / steps as f64;
                drift[axis] += c.b[axis] / steps as f64;
            }
        }
        let mut lo = [0.0; 2];
        let mut hi = [0.0; 2];
        for axis in 0..2 {
            let spread = k_sd * var[axis].sqrt().max(1e-3) + drift[axis].abs();
            lo[axis] = self.x0[axis] - spread;
            hi[axis] = self.x0[axis] + spread;
        }
        DomainBox::new(lo, hi)
    }

    /// Toy model with independent coordinates: `f = x1`, `g = x2`, unit
    /// diffusion. The Jacobian `J[f, g]` is the identity everywhere.
    pub fn independent_axes() -> DiffusionModel {
        let zero = || CoefficientField::constant("b", 0.0);
        let id = |v: f64, name: &str| CoefficientField::constant(name, v);
        DiffusionModel {
            name: "independent_axes".into(),
            b: [zero(), zero()],
            sigma: [
                [id(1.0, "sigma11"), id(0.0, "sigma12")],
                [id(0.0, "sigma21"), id(1.0, "sigma22")],
            ],
            a: [
                [id(1.0, "a11"), id(0.0, "a12")],
                [id(0.0, "a21"), id(1.0, "a22")],
            ],
            r: CoefficientField::constant("r", 0.0),
            f: CoefficientField::along_axis("f", 0, Smooth1d::Affine { a: 0.0, b: 1.0 }),
            g: Payoff::Coordinate { axis: 1 },
            x0: [0.0, 0.0],
            envelope: EnvelopeConstants {
                n_inv: 2.0,
                n_growth: 1.0,
            },
            reduced_call: None,
        }
    }

    /// Lognormal forward asset with constant volatility matrix
    /// `[[nu, 0], [s21, s22]]`, constant rate and a call payoff. The second
    /// coordinate is a passive factor; the priced field depends on `x1` only.
    pub fn constant_vol(
        nu: f64,
        s21: f64,
        s22: f64,
        rate: f64,
        gamma: f64,
        p0: f64,
        y0: f64,
    ) -> Result<DiffusionModel> {
        if nu <= 0.0 || s22 <= 0.0 {
            return Err(Error::Construction(format!(
                "volatility must be positive: nu={nu}, s22={s22}"
            )));
        }
        if gamma <= 0.0 || p0 <= 0.0 {
            return Err(Error::Construction(format!(
                "strike and spot must be positive: gamma={gamma}, p0={p0}"
            )));
        }
        if rate < 0.0 {
            return Err(Error::Construction(format!("rate={rate} is negative")));
        }
        let c = CoefficientField::constant;
        let sigma = Mat2([[nu, 0.0], [s21, s22]]);
        let a = sigma.gram();
        let n_inv = 1.25 * sigma.inverse().expect("positive diagonal").frobenius_norm();
        Ok(DiffusionModel {
            name: "constant_vol".into(),
            b: [c("b1", rate - 0.5 * nu * nu), c("b2", 0.0)],
            sigma: [
                [c("sigma11", nu), c("sigma12", 0.0)],
                [c("sigma21", s21), c("sigma22", s22)],
            ],
            a: [
                [c("a11", a.0[0][0]), c("a12", a.0[0][1])],
                [c("a21", a.0[1][0]), c("a22", a.0[1][1])],
            ],
            r: c("r", rate),
            f: CoefficientField::along_axis(
                "f",
                0,
                Smooth1d::Exp { rate: 1.0 }.scaled((-rate).exp()),
            ),
            g: Payoff::Call { gamma, rate },
            x0: [p0.ln(), y0],
            envelope: EnvelopeConstants {
                n_inv,
                n_growth: 1.0,
            },
            reduced_call: Some(ReducedCallForm { gamma, rate }),
        })
    }
}

/// `sigma sigma^T` entries derived by the product rule, for models without
/// closed-form quadratic coefficients.
pub fn gram_fields(sigma: &[[CoefficientField; 2]; 2]) -> [[CoefficientField; 2]; 2] {
    let entry = |j: usize, k: usize| {
        CoefficientField::new(
            format!("a{}{}", j + 1, k + 1),
            GramEntryField {
                sigma: sigma.clone(),
                j,
                k,
            },
        )
    };
    [[entry(0, 0), entry(0, 1)], [entry(1, 0), entry(1, 1)]]
}

/// One assumption check with its probed margin.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckRow {
    pub id: String,
    pub pass: bool,
    /// Positive margin means the check holds with room to spare.
    pub margin: f64,
    pub worst_t: f64,
    pub worst_x: [f64; 2],
    pub detail: String,
}

/// Result of probing the standing assumptions over a box.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidationReport {
    pub model: String,
    pub n_probes: usize,
    pub rows: Vec<CheckRow>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn row(&self, id: &str) -> Option<&CheckRow> {
        self.rows.iter().find(|r| r.id == id)
    }
}

/// Probes invertibility and ellipticity of the volatility, nonnegativity of
/// the rate, consistency `a = sigma sigma^T` and the payoff growth bound at
/// quasi-random points of `[0,1] x domain`.
pub fn validate_assumptions(
    model: &DiffusionModel,
    domain: &DomainBox,
    n_probes: usize,
) -> ValidationReport {
    let pts = probes::probe_points_with_time(n_probes.max(16), domain);
    let mut rows = Vec::new();

    // Worst-case trackers: (metric, t, x). Each check keeps its own extremum.
    let mut inv_worst = (f64::NEG_INFINITY, 0.0, [0.0; 2]);
    let mut eig_worst = (f64::INFINITY, 0.0, [0.0; 2]);
    let mut rate_worst = (f64::INFINITY, 0.0, [0.0; 2]);
    let mut gram_worst = (f64::NEG_INFINITY, 0.0, [0.0; 2]);
    let mut eval_failure: Option<String> = None;

    for &(t, x) in &pts {
        let c = match model.eval_coeffs(t, x) {
            Ok(c) => c,
            Err(e) => {
                eval_failure.get_or_insert(e.to_string());
                continue;
            }
        };
        let inv_norm = match c.sigma.inverse() {
            Some(inv) => inv.frobenius_norm(),
            None => f64::INFINITY,
        };
        if inv_norm > inv_worst.0 {
            inv_worst = (inv_norm, t, x);
        }
        let eig = c.a.min_eigenvalue_symmetric();
        if eig < eig_worst.0 {
            eig_worst = (eig, t, x);
        }
        if c.r < rate_worst.0 {
            rate_worst = (c.r, t, x);
        }
        let gram = c.sigma.gram();
        let scale = c.a.frobenius_norm().max(gram.frobenius_norm()).max(1e-30);
        let mut rel = 0.0f64;
        for j in 0..2 {
            for k in 0..2 {
                rel = rel.max((c.a.0[j][k] - gram.0[j][k]).abs() / scale);
            }
        }
        if rel > gram_worst.0 {
            gram_worst = (rel, t, x);
        }
    }

    rows.push(CheckRow {
        id: "finite_coefficients".into(),
        pass: eval_failure.is_none(),
        margin: 0.0,
        worst_t: 0.0,
        worst_x: [0.0; 2],
        detail: eval_failure.unwrap_or_else(|| "all probed values finite".into()),
    });

    let n_inv = model.envelope.n_inv;
    rows.push(CheckRow {
        id: "A1_sigma_inverse_bound".into(),
        pass: inv_worst.0 <= n_inv,
        margin: n_inv - inv_worst.0,
        worst_t: inv_worst.1,
        worst_x: inv_worst.2,
        detail: format!("max ||sigma^-1||_F = {} vs bound {}", inv_worst.0, n_inv),
    });

    let eig_floor = 1.0 / (n_inv * n_inv);
    rows.push(CheckRow {
        id: "A1_uniform_ellipticity".into(),
        pass: eig_worst.0 >= eig_floor,
        margin: eig_worst.0 - eig_floor,
        worst_t: eig_worst.1,
        worst_x: eig_worst.2,
        detail: format!(
            "min eigenvalue of a = {} vs floor 1/N^2 = {}",
            eig_worst.0, eig_floor
        ),
    });

    rows.push(CheckRow {
        id: "A2_rate_nonnegative".into(),
        pass: rate_worst.0 >= 0.0,
        margin: rate_worst.0,
        worst_t: rate_worst.1,
        worst_x: rate_worst.2,
        detail: format!("min r = {}", rate_worst.0),
    });

    rows.push(CheckRow {
        id: "diffusion_consistency".into(),
        pass: gram_worst.0 <= 1e-12,
        margin: 1e-12 - gram_worst.0,
        worst_t: gram_worst.1,
        worst_x: gram_worst.2,
        detail: format!("max relative |a - sigma sigma^T| = {}", gram_worst.0),
    });

    // Payoff gradient growth at the horizon.
    let mut growth_worst = (f64::NEG_INFINITY, [0.0; 2]);
    let kink = model.g.kink_x1();
    for x in probes::probe_points(n_probes.max(16), domain) {
        if let Some(k) = kink {
            if (x[0] - k).abs() < 1e-9 {
                continue;
            }
        }
        let grad = model.g.grad(x);
        let norm_x = (x[0] * x[0] + x[1] * x[1]).sqrt();
        let cap = (model.envelope.n_growth * (1.0 + norm_x)).exp();
        let ratio = grad[0].abs().max(grad[1].abs()) / cap;
        if ratio > growth_worst.0 {
            growth_worst = (ratio, x);
        }
    }
    rows.push(CheckRow {
        id: "A4_payoff_growth".into(),
        pass: growth_worst.0 <= 1.0,
        margin: 1.0 - growth_worst.0,
        worst_t: HORIZON,
        worst_x: growth_worst.1,
        detail: format!(
            "max |dg| / e^(N(1+|x|)) = {} with N = {}",
            growth_worst.0, model.envelope.n_growth
        ),
    });

    ValidationReport {
        model: model.name.clone(),
        n_probes: pts.len(),
        rows,
    }
}
