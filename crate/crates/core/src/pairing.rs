//! Weak bilinear pairing of a payoff against compactly supported test
//! functions.
//!
//! The pairing integrates the structural coefficients against the payoff
//! gradient and a test function over a box `K`:
//! `B_K[h, phi] = int_K 1/2 sum A^{jk} d_j h d_k phi
//!   - sum_j (B^j - 1/2 sum_k d_k A^{jk}) d_j h phi + C h phi`.
//! A nonzero value certifies that the determinant `J[f, h]` cannot vanish
//! identically on `K`, which is the second (weak) route to completeness when
//! the pointwise rank test degenerates on the terminal slice.
//!
//! `pairing_weak_generator` evaluates the same form written in the generator
//! convention of the structural values; the two agree identically and the
//! pairing tests measure that ratio rather than assume it.
//!
//! For reduced call models (log-price forward, call payoff, diffusion row
//! `a^{11}` depending only on the second coordinate) the pairing collapses
//! to a line integral along the strike: `pairing_call_closed_form` evaluates
//! `-1/2 (e^{-r} gamma)^2 int (d a^{11}/d x2)(1, [ln gamma, x2])
//!   phi(ln gamma, x2) dx2`.

use std::cell::RefCell;

use crate::grid::DomainBox;
use crate::model::DiffusionModel;
use crate::operators::{structural_divergence, structural_values};
use crate::payoff::Payoff;
use crate::quadrature::{adaptive_1d, adaptive_2d, integrate_1d, integrate_2d};
use crate::{Error, Point, Result};

/// Compactly supported test function, vanishing with its gradient on the
/// boundary of its support.
#[derive(Debug, Clone)]
pub enum TestFunction {
    /// Radial smoothstep `psi(|x - c| / s)` with `psi(u) = 1 - 3u^2 + 2u^3`.
    Cone { center: Point, scale: f64 },
    /// Product bump `(1 - u1^2)^3 (1 - u2^2)^3` with `u_i = (x_i - c_i)/s_i`.
    TensorBump { center: Point, scale: [f64; 2] },
}

impl TestFunction {
    pub fn eval(&self, x: Point) -> f64 {
        match self {
            TestFunction::Cone { center, scale } => {
                let u = dist(x, *center) / scale;
                if u >= 1.0 {
                    0.0
                } else {
                    1.0 - 3.0 * u * u + 2.0 * u * u * u
                }
            }
            TestFunction::TensorBump { center, scale } => {
                let mut v = 1.0;
                for i in 0..2 {
                    let u = (x[i] - center[i]) / scale[i];
                    if u.abs() >= 1.0 {
                        return 0.0;
                    }
                    let w = 1.0 - u * u;
                    v *= w * w * w;
                }
                v
            }
        }
    }

    pub fn grad(&self, x: Point) -> [f64; 2] {
        match self {
            TestFunction::Cone { center, scale } => {
                let r = dist(x, *center);
                let u = r / scale;
                if u >= 1.0 || r == 0.0 {
                    return [0.0, 0.0];
                }
                // psi'(u) = 6u(u - 1), and d u / d x = (x - c) / (r s).
                let dpsi = 6.0 * u * (u - 1.0);
                [
                    dpsi * (x[0] - center[0]) / (r * scale),
                    dpsi * (x[1] - center[1]) / (r * scale),
                ]
            }
            TestFunction::TensorBump { center, scale } => {
                let u = [
                    (x[0] - center[0]) / scale[0],
                    (x[1] - center[1]) / scale[1],
                ];
                if u[0].abs() >= 1.0 || u[1].abs() >= 1.0 {
                    return [0.0, 0.0];
                }
                let b = |q: f64| (1.0 - q * q).powi(3);
                let db = |q: f64| -6.0 * q * (1.0 - q * q) * (1.0 - q * q);
                [
                    db(u[0]) / scale[0] * b(u[1]),
                    b(u[0]) * db(u[1]) / scale[1],
                ]
            }
        }
    }

    /// Axis-aligned bounding box of the support.
    pub fn support(&self) -> DomainBox {
        match self {
            TestFunction::Cone { center, scale } => DomainBox::new(
                [center[0] - scale, center[1] - scale],
                [center[0] + scale, center[1] + scale],
            )
            .expect("positive scale"),
            TestFunction::TensorBump { center, scale } => DomainBox::new(
                [center[0] - scale[0], center[1] - scale[1]],
                [center[0] + scale[0], center[1] + scale[1]],
            )
            .expect("positive scales"),
        }
    }

    pub fn label(&self) -> String {
        match self {
            TestFunction::Cone { center, scale } => {
                format!("cone(c=[{:.3},{:.3}],s={:.3})", center[0], center[1], scale)
            }
            TestFunction::TensorBump { center, scale } => format!(
                "bump(c=[{:.3},{:.3}],s=[{:.3},{:.3}])",
                center[0], center[1], scale[0], scale[1]
            ),
        }
    }
}

fn dist(x: Point, c: Point) -> f64 {
    (x[0] - c[0]).hypot(x[1] - c[1])
}

/// Standard library of test functions for a search box: both families at
/// nine interior centers and three scales, every support strictly inside the
/// box so all boundary terms of the weak form vanish.
pub fn test_function_library(domain: &DomainBox) -> Vec<TestFunction> {
    let fracs = [0.25, 0.5, 0.75];
    let scale_fracs = [0.9, 0.6, 0.35];
    let mut out = Vec::with_capacity(54);
    for &fx in &fracs {
        for &fy in &fracs {
            let c = [
                domain.lo[0] + fx * domain.width(0),
                domain.lo[1] + fy * domain.width(1),
            ];
            let d = [
                (c[0] - domain.lo[0]).min(domain.hi[0] - c[0]),
                (c[1] - domain.lo[1]).min(domain.hi[1] - c[1]),
            ];
            let dmin = d[0].min(d[1]);
            for &sf in &scale_fracs {
                out.push(TestFunction::Cone {
                    center: c,
                    scale: sf * dmin,
                });
                out.push(TestFunction::TensorBump {
                    center: c,
                    scale: [sf * d[0], sf * d[1]],
                });
            }
        }
    }
    out
}

/// Outcome of one pairing evaluation.
#[derive(Debug, Clone)]
pub struct PairingResult {
    pub value: f64,
    pub error_estimate: f64,
    /// Integral of the absolute integrand on a coarse grid; the natural
    /// magnitude against which a small `value` should be judged. A pairing
    /// can integrate to zero through cancellation while its integrand stays
    /// order one, and only `value / scale` distinguishes that from a truly
    /// nonzero pairing.
    pub scale: f64,
    pub converged: bool,
    pub method: String,
}

const START_CELLS: usize = 8;
const MAX_CELLS: usize = 256;
const GL_POINTS: usize = 5;
const SCALE_CELLS: usize = 16;
const TOL_REL: f64 = 1e-7;
const TOL_ABS: f64 = 1e-14;
/// Absolute tolerance granted per unit of integrand scale: cancellation
/// below this level is treated as a zero rather than refined forever.
const TOL_SCALE: f64 = 1e-9;

fn check_weak_payoff(h: &Payoff) -> Result<()> {
    if !h.weakly_differentiable() {
        return Err(Error::Unsupported(format!(
            "payoff `{}` has no locally integrable gradient; the weak pairing \
             is undefined for it",
            h.name()
        )));
    }
    Ok(())
}

/// Splits `region` along the payoff kink (if it crosses the interior) so the
/// composite quadrature never straddles the gradient discontinuity.
fn kink_slabs(h: &Payoff, region: &DomainBox) -> Vec<DomainBox> {
    if let Some(k) = h.kink_x1() {
        if k > region.lo[0] + 1e-14 && k < region.hi[0] - 1e-14 {
            return vec![
                DomainBox::new(region.lo, [k, region.hi[1]]).expect("left slab"),
                DomainBox::new([k, region.lo[1]], region.hi).expect("right slab"),
            ];
        }
    }
    vec![region.clone()]
}

fn integrate_pairing<I>(slabs: &[DomainBox], integrand: I, method: &str) -> Result<PairingResult>
where
    I: Fn(Point) -> Result<f64>,
{
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let guarded = |x1: f64, x2: f64| match integrand([x1, x2]) {
        Ok(v) => v,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            0.0
        }
    };
    let mut value = 0.0;
    let mut err = 0.0;
    let mut scale = 0.0;
    let mut converged = true;
    for slab in slabs {
        scale += integrate_2d(
            |x1, x2| guarded(x1, x2).abs(),
            slab,
            (SCALE_CELLS, SCALE_CELLS),
            GL_POINTS,
        );
        if let Some(e) = failure.borrow_mut().take() {
            return Err(e);
        }
    }
    for slab in slabs {
        let res = adaptive_2d(
            &guarded,
            slab,
            START_CELLS,
            MAX_CELLS,
            GL_POINTS,
            TOL_REL,
            TOL_ABS.max(TOL_SCALE * scale),
        );
        if let Some(e) = failure.borrow_mut().take() {
            return Err(e);
        }
        value += res.value;
        if res.converged {
            err += res.error_estimate;
        } else {
            converged = false;
        }
    }
    Ok(PairingResult {
        value,
        error_estimate: if converged { err } else { f64::NAN },
        scale,
        converged,
        method: method.to_string(),
    })
}

/// Weak pairing of `h` against `phi` over `region` at time `t`, with the
/// structural coefficients in the market convention.
pub fn pairing_weak(
    model: &DiffusionModel,
    h: &Payoff,
    phi: &TestFunction,
    region: &DomainBox,
    t: f64,
) -> Result<PairingResult> {
    check_weak_payoff(h)?;
    let slabs = kink_slabs(h, region);
    integrate_pairing(
        &slabs,
        |x| {
            let pv = phi.eval(x);
            let pg = phi.grad(x);
            if pv == 0.0 && pg == [0.0, 0.0] {
                return Ok(0.0);
            }
            let sv = structural_values(model, &model.f, t, x)?;
            let div = structural_divergence(model, &model.f, t, x)?;
            let hg = h.grad(x);
            let hv = h.eval(x);
            let mut acc = sv.c * hv * pv;
            for j in 0..2 {
                for k in 0..2 {
                    acc += 0.5 * sv.a.0[j][k] * hg[j] * pg[k];
                }
                acc -= (sv.b[j] - 0.5 * div[j]) * hg[j] * pv;
            }
            Ok(acc)
        },
        "quadrature_market",
    )
}

/// Same pairing written with the generator-convention structural values:
/// `sum A d_j h d_k phi - sum (B - sum_k d_k A) d_j h phi - C h phi`.
pub fn pairing_weak_generator(
    model: &DiffusionModel,
    h: &Payoff,
    phi: &TestFunction,
    region: &DomainBox,
    t: f64,
) -> Result<PairingResult> {
    check_weak_payoff(h)?;
    let slabs = kink_slabs(h, region);
    integrate_pairing(
        &slabs,
        |x| {
            let pv = phi.eval(x);
            let pg = phi.grad(x);
            if pv == 0.0 && pg == [0.0, 0.0] {
                return Ok(0.0);
            }
            let sv = structural_values(model, &model.f, t, x)?.generator_convention();
            let div = structural_divergence(model, &model.f, t, x)?;
            let hg = h.grad(x);
            let hv = h.eval(x);
            let mut acc = -sv.c * hv * pv;
            for j in 0..2 {
                for k in 0..2 {
                    acc += sv.a.0[j][k] * hg[j] * pg[k];
                }
                acc -= (sv.b[j] - 0.5 * div[j]) * hg[j] * pv;
            }
            Ok(acc)
        },
        "quadrature_generator",
    )
}

/// Closed-form pairing for reduced call models: a line integral of the
/// second-coordinate slope of `a^{11}` along the strike locus.
pub fn pairing_call_closed_form(
    model: &DiffusionModel,
    phi: &TestFunction,
    region: &DomainBox,
) -> Result<PairingResult> {
    let reduced = model.reduced_call.as_ref().ok_or_else(|| {
        Error::Unsupported(format!(
            "model `{}` is not registered as a reduced call form",
            model.name
        ))
    })?;
    let a11 = &model.a[0][0];
    if !a11.caps().dx {
        return Err(Error::MissingDerivative(format!(
            "first x-derivative of `{}`",
            a11.name()
        )));
    }
    let k = reduced.gamma.ln();
    if k <= region.lo[0] || k >= region.hi[0] {
        return Ok(PairingResult {
            value: 0.0,
            error_estimate: 0.0,
            scale: 0.0,
            converged: true,
            method: "closed_form_reduced".to_string(),
        });
    }
    let factor = -0.5 * ((-reduced.rate).exp() * reduced.gamma).powi(2);
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let line = |x2: f64| {
        let x = [k, x2];
        let slope = a11.dx(1, 1.0, x);
        if !slope.is_finite() {
            failure.borrow_mut().get_or_insert(Error::NonFiniteCoefficient {
                name: a11.name().to_string(),
                value: slope,
                t: 1.0,
                x1: x[0],
                x2: x[1],
            });
            return 0.0;
        }
        slope * phi.eval(x)
    };
    let scale = integrate_1d(
        |x2| line(x2).abs(),
        region.lo[1],
        region.hi[1],
        SCALE_CELLS,
        GL_POINTS,
    );
    if let Some(e) = failure.borrow_mut().take() {
        return Err(e);
    }
    let res = adaptive_1d(
        &line,
        region.lo[1],
        region.hi[1],
        START_CELLS,
        MAX_CELLS * 4,
        GL_POINTS,
        TOL_REL,
        TOL_ABS.max(TOL_SCALE * scale),
    );
    if let Some(e) = failure.borrow_mut().take() {
        return Err(e);
    }
    Ok(PairingResult {
        value: factor * res.value,
        error_estimate: factor.abs() * res.error_estimate,
        scale: factor.abs() * scale,
        converged: res.converged,
        method: "closed_form_reduced".to_string(),
    })
}
