//! Terminal payoffs with weak gradients and kink bookkeeping.

use crate::field::CoefficientField;
use crate::Point;

/// Payoff of a claim on the state at the horizon.
///
/// The gradient accessor returns the classical gradient away from the kink
/// locus; on the locus itself it returns the limit from the out-of-the-money
/// side. Grid and probe layouts keep evaluation points off the locus.
#[derive(Clone, Debug)]
pub enum Payoff {
    /// `exp(-rate) (exp(x1) - gamma)^+`, kinked on `x1 = ln gamma`.
    Call { gamma: f64, rate: f64 },
    /// `exp(-rate) (gamma - exp(x1))^+`, kinked on `x1 = ln gamma`.
    Put { gamma: f64, rate: f64 },
    /// `1_{x1 > ln gamma}`; discontinuous, not weakly differentiable.
    Digital { gamma: f64 },
    /// The coordinate `x_axis`; toy payoff for rank checks.
    Coordinate { axis: usize },
    /// A registered coefficient field evaluated at the horizon.
    FieldAtHorizon(CoefficientField),
}

impl Payoff {
    pub fn name(&self) -> String {
        match self {
            Payoff::Call { .. } => "call".into(),
            Payoff::Put { .. } => "put".into(),
            Payoff::Digital { .. } => "digital".into(),
            Payoff::Coordinate { axis } => format!("x{}", axis + 1),
            Payoff::FieldAtHorizon(f) => format!("{}_at_horizon", f.name()),
        }
    }

    pub fn eval(&self, x: Point) -> f64 {
        match self {
            Payoff::Call { gamma, rate } => (-rate).exp() * (x[0].exp() - gamma).max(0.0),
            Payoff::Put { gamma, rate } => (-rate).exp() * (gamma - x[0].exp()).max(0.0),
            Payoff::Digital { gamma } => {
                if x[0] > gamma.ln() {
                    1.0
                } else {
                    0.0
                }
            }
            Payoff::Coordinate { axis } => x[*axis],
            Payoff::FieldAtHorizon(f) => f.eval(1.0, x),
        }
    }

    /// Gradient off the kink locus.
    pub fn grad(&self, x: Point) -> [f64; 2] {
        match self {
            Payoff::Call { gamma, rate } => {
                if x[0].exp() > *gamma {
                    [(-rate).exp() * x[0].exp(), 0.0]
                } else {
                    [0.0, 0.0]
                }
            }
            Payoff::Put { gamma, rate } => {
                if x[0].exp() < *gamma {
                    [-(-rate).exp() * x[0].exp(), 0.0]
                } else {
                    [0.0, 0.0]
                }
            }
            Payoff::Digital { .. } => [0.0, 0.0],
            Payoff::Coordinate { axis } => {
                let mut g = [0.0, 0.0];
                g[*axis] = 1.0;
                g
            }
            Payoff::FieldAtHorizon(f) => [f.dx(0, 1.0, x), f.dx(1, 1.0, x)],
        }
    }

    /// Vertical line `x1 = const` on which the payoff is non-smooth.
    pub fn kink_x1(&self) -> Option<f64> {
        match self {
            Payoff::Call { gamma, .. }
            | Payoff::Put { gamma, .. }
            | Payoff::Digital { gamma } => Some(gamma.ln()),
            _ => None,
        }
    }

    /// Whether the weak gradient exists (digitals jump, they do not kink).
    pub fn weakly_differentiable(&self) -> bool {
        !matches!(self, Payoff::Digital { .. })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn call_value_and_gradient() {
        let g = Payoff::Call {
            gamma: 1.0,
            rate: 0.0,
        };
        assert_eq!(g.eval([0.0, 3.0]), 0.0);
        let x = [0.5, -1.0];
        assert!((g.eval(x) - (x[0].exp() - 1.0)).abs() < 1e-15);
        assert!((g.grad(x)[0] - x[0].exp()).abs() < 1e-15);
        assert_eq!(g.grad(x)[1], 0.0);
        assert_eq!(g.grad([-0.5, 0.0]), [0.0, 0.0]);
        assert_eq!(g.kink_x1(), Some(0.0));
    }

    #[test]
    fn put_call_difference_is_linear() {
        let gamma = 1.3;
        let rate = 0.05;
        let call = Payoff::Call { gamma, rate };
        let put = Payoff::Put { gamma, rate };
        for &x1 in &[-1.0, 0.0, 0.26, 1.5] {
            let diff = call.eval([x1, 0.0]) - put.eval([x1, 0.0]);
            let want = (-rate).exp() * (x1.exp() - gamma);
            assert!((diff - want).abs() < 1e-14, "x1={x1}");
        }
    }

    #[test]
    fn digital_is_an_indicator() {
        let g = Payoff::Digital { gamma: 2.0 };
        assert_eq!(g.eval([2.0f64.ln() + 0.01, 0.0]), 1.0);
        assert_eq!(g.eval([2.0f64.ln() - 0.01, 0.0]), 0.0);
        assert!(!g.weakly_differentiable());
    }
}
