//! Activation functions and their first derivatives.

/// Supported activation kinds. The derivative of relu at exactly zero is
/// defined as zero (conventional subgradient choice).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ActivationKind {
    #[default]
    Relu,
    Sigmoid,
    Tanh,
    Identity,
}

impl ActivationKind {
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            ActivationKind::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            ActivationKind::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Identity => x,
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            ActivationKind::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::Sigmoid => {
                let s = 1.0 / (1.0 + (-x).exp());
                s * (1.0 - s)
            }
            ActivationKind::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            ActivationKind::Identity => 1.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_derivative_at_zero_is_zero() {
        assert_eq!(ActivationKind::Relu.derivative(0.0), 0.0);
        assert_eq!(ActivationKind::Relu.apply(-3.0), 0.0);
        assert_eq!(ActivationKind::Relu.apply(2.5), 2.5);
    }

    #[test]
    fn derivatives_match_central_differences() {
        let kinds = [
            ActivationKind::Relu,
            ActivationKind::Sigmoid,
            ActivationKind::Tanh,
            ActivationKind::Identity,
        ];
        let h = 1e-5;
        // probe away from the relu kink
        for x in [-2.0, -0.7, 0.3, 1.1, 2.9] {
            for kind in kinds {
                let fd = (kind.apply(x + h) - kind.apply(x - h)) / (2.0 * h);
                assert!(
                    (fd - kind.derivative(x)).abs() < 1e-8,
                    "{kind:?} at {x}: fd {fd} vs analytic {}",
                    kind.derivative(x)
                );
            }
        }
    }
}
