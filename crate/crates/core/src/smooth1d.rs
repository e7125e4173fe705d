//! One-dimensional smooth functions with closed-form derivatives.
//!
//! Diffusion coefficients are registered as compositions of a small family of
//! smooth scalar functions. Every member carries exact derivatives of every
//! order, so the structural operators and the envelope checks never fall back
//! to numerical differentiation.

use serde::{Deserialize, Serialize};

/// Smooth scalar function of one variable with exact derivatives.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smooth1d {
    /// Constant `c`.
    Const(f64),
    /// `a + b y`.
    Affine { a: f64, b: f64 },
    /// `base + scale * (2/pi) * atan(y)`; bounded between `base - scale` and
    /// `base + scale`.
    ArctanSigmoid { base: f64, scale: f64 },
    /// `base + scale * tanh(y)`.
    TanhSigmoid { base: f64, scale: f64 },
    /// `exp(rate * y)`.
    Exp { rate: f64 },
    Sum(Box<Smooth1d>, Box<Smooth1d>),
    Product(Box<Smooth1d>, Box<Smooth1d>),
    Scale(f64, Box<Smooth1d>),
    /// `f(shift + scale * y)`.
    Precompose {
        f: Box<Smooth1d>,
        shift: f64,
        scale: f64,
    },
}

impl Smooth1d {
    pub fn eval(&self, y: f64) -> f64 {
        self.deriv(0, y)
    }

    /// `k`-th derivative at `y`; `k = 0` is the value itself.
    pub fn deriv(&self, k: usize, y: f64) -> f64 {
        match self {
            Smooth1d::Const(c) => {
                if k == 0 {
                    *c
                } else {
                    0.0
                }
            }
            Smooth1d::Affine { a, b } => match k {
                0 => a + b * y,
                1 => *b,
                _ => 0.0,
            },
            Smooth1d::ArctanSigmoid { base, scale } => {
                let factor = scale * std::f64::consts::FRAC_2_PI;
                if k == 0 {
                    base + factor * y.atan()
                } else {
                    factor * arctan_deriv(k, y)
                }
            }
            Smooth1d::TanhSigmoid { base, scale } => {
                if k == 0 {
                    base + scale * y.tanh()
                } else {
                    scale * tanh_deriv(k, y)
                }
            }
            Smooth1d::Exp { rate } => rate.powi(k as i32) * (rate * y).exp(),
            Smooth1d::Sum(f, g) => f.deriv(k, y) + g.deriv(k, y),
            Smooth1d::Product(f, g) => {
                let mut acc = 0.0;
                for i in 0..=k {
                    acc += binomial(k, i) * f.deriv(i, y) * g.deriv(k - i, y);
                }
                acc
            }
            Smooth1d::Scale(c, f) => c * f.deriv(k, y),
            Smooth1d::Precompose { f, shift, scale } => {
                scale.powi(k as i32) * f.deriv(k, shift + scale * y)
            }
        }
    }

    /// Convenience: `self * other`.
    pub fn product(self, other: Smooth1d) -> Smooth1d {
        Smooth1d::Product(Box::new(self), Box::new(other))
    }

    /// Convenience: `self(y)^2`.
    pub fn squared(self) -> Smooth1d {
        Smooth1d::Product(Box::new(self.clone()), Box::new(self))
    }

    /// Convenience: `self + other`.
    pub fn plus(self, other: Smooth1d) -> Smooth1d {
        Smooth1d::Sum(Box::new(self), Box::new(other))
    }

    /// Convenience: `c * self`.
    pub fn scaled(self, c: f64) -> Smooth1d {
        Smooth1d::Scale(c, Box::new(self))
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// `k`-th derivative of `atan` for `k >= 1`:
/// `(k-1)! cos^k(theta) sin(k (theta + pi/2))` with `theta = atan(y)`.
fn arctan_deriv(k: usize, y: f64) -> f64 {
    let theta = y.atan();
    let mut fact = 1.0;
    for i in 1..k {
        fact *= i as f64;
    }
    fact * theta.cos().powi(k as i32) * ((k as f64) * (theta + std::f64::consts::FRAC_PI_2)).sin()
}

/// `k`-th derivative of `tanh` for `k >= 1`, evaluated through the
/// polynomial recurrence `d/dy P(T) = P'(T) (1 - T^2)` with `T = tanh(y)`.
fn tanh_deriv(k: usize, y: f64) -> f64 {
    // Coefficients of the current polynomial in T, starting from P(T) = T.
    let mut poly = vec![0.0, 1.0];
    for _ in 0..k {
        // P'(T)
        let mut dp = vec![0.0; poly.len().max(2) - 1];
        for (i, c) in poly.iter().enumerate().skip(1) {
            dp[i - 1] = c * i as f64;
        }
        // P'(T) * (1 - T^2)
        let mut next = vec![0.0; dp.len() + 2];
        for (i, c) in dp.iter().enumerate() {
            next[i] += c;
            next[i + 2] -= c;
        }
        while next.len() > 1 && next.last() == Some(&0.0) {
            next.pop();
        }
        poly = next;
    }
    let t = y.tanh();
    let mut acc = 0.0;
    for &c in poly.iter().rev() {
        acc = acc * t + c;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn central_diff(f: &Smooth1d, k: usize, y: f64, h: f64) -> f64 {
        if k == 0 {
            return f.eval(y);
        }
        (central_diff(f, k - 1, y + h, h) - central_diff(f, k - 1, y - h, h)) / (2.0 * h)
    }

    #[test]
    fn arctan_derivatives_match_finite_differences() {
        let f = Smooth1d::ArctanSigmoid {
            base: 0.5,
            scale: 0.3,
        };
        for k in 1..=4 {
            for &y in &[-2.0, -0.3, 0.0, 0.7, 1.9] {
                let exact = f.deriv(k, y);
                let fd = central_diff(&f, k, y, 1e-3);
                assert!(
                    (exact - fd).abs() < 1e-4 * (1.0 + exact.abs()),
                    "k={k}, y={y}, exact={exact}, fd={fd}"
                );
            }
        }
    }

    #[test]
    fn tanh_derivatives_match_finite_differences() {
        let f = Smooth1d::TanhSigmoid {
            base: 0.0,
            scale: 1.0,
        };
        for k in 1..=4 {
            for &y in &[-1.2, 0.0, 0.4, 2.1] {
                let exact = f.deriv(k, y);
                let fd = central_diff(&f, k, y, 1e-3);
                assert!(
                    (exact - fd).abs() < 1e-4 * (1.0 + exact.abs()),
                    "k={k}, y={y}, exact={exact}, fd={fd}"
                );
            }
        }
    }

    #[test]
    fn product_and_precompose_derivatives() {
        let nu = Smooth1d::ArctanSigmoid {
            base: 0.5,
            scale: 0.3,
        };
        let f = nu.clone().squared().scaled(-0.5);
        let g = Smooth1d::Precompose {
            f: Box::new(f.clone()),
            shift: 0.2,
            scale: 0.7,
        };
        for k in 0..=3 {
            for &y in &[-1.0, 0.1, 0.9] {
                let exact = g.deriv(k, y);
                let fd = central_diff(&g, k, y, 1e-3);
                assert!(
                    (exact - fd).abs() < 1e-5 * (1.0 + exact.abs()),
                    "k={k}, y={y}, exact={exact}, fd={fd}"
                );
            }
        }
    }

    #[test]
    fn arctan_derivative_magnitude_bound() {
        // |atan^(k)(y)| <= (k-1)! (1 + y^2)^(-k/2)
        let f = Smooth1d::ArctanSigmoid {
            base: 0.0,
            scale: std::f64::consts::FRAC_PI_2,
        };
        for k in 1..=6 {
            let mut fact = 1.0;
            for i in 1..k {
                fact *= i as f64;
            }
            for &y in &[-3.0f64, -1.0, 0.0, 0.5, 2.0, 8.0] {
                let bound = fact * (1.0 + y * y).powf(-0.5 * k as f64);
                let val = f.deriv(k, y).abs();
                assert!(val <= bound * (1.0 + 1e-12), "k={k}, y={y}, {val} > {bound}");
            }
        }
    }

    #[test]
    fn exp_derivatives_are_powers_of_rate() {
        let f = Smooth1d::Exp { rate: -2.0 };
        let v = f.deriv(3, 0.5);
        assert!((v - (-8.0) * (-1.0f64).exp()).abs() < 1e-14);
    }
}
