//! The fractional-order update rule.
//!
//! Parameters are updated with a gradient that is rescaled element-wise by
//! `(|delta| + offset)^(1-alpha) / gamma(2-alpha)`, where `delta` is the
//! change of the parameter between the previous and the current iteration.
//! With `alpha = 1` the scale is identically one and the rule reduces to
//! classical gradient descent. Gradients passed *between* layers stay
//! ordinary first-order gradients; only the per-parameter update is
//! rescaled.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Lanczos approximation (g = 7, n = 9), coefficients as published in the
/// GNU Scientific Library.
const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Gamma function on the domain `(0, 2]`, the only range the update rule
/// needs. Absolute error is well below 1e-12 across the domain.
pub fn gamma(x: f64) -> Result<f64> {
    if !(x > 0.0 && x <= 2.0) {
        return Err(Error::GammaDomain { x });
    }
    Ok(gamma_unchecked(x))
}

fn gamma_unchecked(x: f64) -> f64 {
    if x < 0.5 {
        // reflection formula
        std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma_unchecked(1.0 - x))
    } else {
        let x = x - 1.0;
        let mut acc = LANCZOS_COEFFS[0];
        for (i, &c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
            acc += c / (x + i as f64);
        }
        let t = x + LANCZOS_G + 0.5;
        (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * acc
    }
}

/// Whether the scaled update uses the gradient of the current iteration or
/// the cached gradient of the previous one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimingMode {
    /// Current batch gradient at current parameters, scaled by the last
    /// parameter change. Default for minibatch training.
    #[default]
    Synchronous,
    /// Previous iteration's gradient, reproducing the two-point iteration
    /// literally. Requires one cached gradient tensor per parameter.
    Lagged,
}

/// How the very first update is handled. At iteration zero the previous
/// parameters equal the current ones, so the scale would be dominated by
/// the singularity offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FirstStepMode {
    /// Take one plain gradient-descent step to establish two distinct
    /// iterates.
    #[default]
    IntegerOrder,
    /// Apply the offset-guarded scale from the start.
    Guarded,
}

/// Configuration of the fractional-order update rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FracGradConfig {
    /// Fractional order, valid in (0, 2). `alpha = 1` recovers classical
    /// gradient descent.
    pub alpha: f64,
    /// Learning rate, must be positive.
    pub mu: f64,
    /// Singularity offset added to `|delta|` before exponentiation. The
    /// offset is added to the absolute difference, `(|delta| + offset)^e`,
    /// rather than inside the absolute value, so the base stays strictly
    /// positive for every delta whenever the offset is positive. Keeping
    /// it at zero with `alpha > 1` risks a singular update when a
    /// parameter did not move.
    pub delta_offset: f64,
    pub timing_mode: TimingMode,
    pub first_step_mode: FirstStepMode,
    /// Optional upper bound on the scale tensor, off by default. Enabling
    /// it deviates from the plain update rule and is meant for harness
    /// robustness experiments only.
    pub max_scale: Option<f64>,
}

pub const DEFAULT_DELTA_OFFSET: f64 = 1e-8;

impl FracGradConfig {
    pub fn new(alpha: f64, mu: f64) -> Result<Self> {
        let cfg = Self {
            alpha,
            mu,
            delta_offset: DEFAULT_DELTA_OFFSET,
            timing_mode: TimingMode::default(),
            first_step_mode: FirstStepMode::default(),
            max_scale: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_delta_offset(mut self, delta_offset: f64) -> Result<Self> {
        self.delta_offset = delta_offset;
        self.validate()?;
        Ok(self)
    }

    pub fn with_timing_mode(mut self, timing_mode: TimingMode) -> Self {
        self.timing_mode = timing_mode;
        self
    }

    pub fn with_first_step_mode(mut self, first_step_mode: FirstStepMode) -> Self {
        self.first_step_mode = first_step_mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in (0, 2), got {}",
                self.alpha
            )));
        }
        // mu = 0 is accepted as a degenerate no-op schedule
        if !(self.mu >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be nonnegative, got {}",
                self.mu
            )));
        }
        if self.delta_offset < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "delta offset must be nonnegative, got {}",
                self.delta_offset
            )));
        }
        Ok(())
    }
}

/// Per-parameter optimizer history: the previous-iteration parameters, the
/// previous gradient (lagged mode only) and the iteration counter.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub prev_params: Tensor,
    pub prev_grad: Option<Tensor>,
    pub iteration: u64,
}

impl OptimizerState {
    /// At iteration zero the previous parameters equal the initial ones.
    pub fn new(initial_params: &Tensor) -> Self {
        Self {
            prev_params: initial_params.clone(),
            prev_grad: None,
            iteration: 0,
        }
    }
}

/// The element-wise scale factor `(|delta| + offset)^(1-alpha) / gamma(2-alpha)`.
/// Strictly positive whenever the preconditions hold; identically one for
/// `alpha = 1`.
pub fn frac_scale(delta_params: &Tensor, cfg: &FracGradConfig) -> Result<Tensor> {
    cfg.validate()?;
    if cfg.alpha == 1.0 {
        return Tensor::ones(delta_params.shape().to_vec());
    }
    let g = gamma(2.0 - cfg.alpha)?;
    let scaled = delta_params
        .abs_pow_offset(1.0 - cfg.alpha, cfg.delta_offset)?
        .scale(1.0 / g);
    match cfg.max_scale {
        Some(cap) => Ok(scaled.map(|x| x.min(cap))),
        None => Ok(scaled),
    }
}

/// One scalar step of the fractional-order rule:
/// `x_next = x_curr - mu * grad / gamma(2-alpha) * (|x_curr - x_prev| + offset)^(1-alpha)`,
/// where `grad_value` is the derivative evaluated at `x_prev`.
pub fn frac_step_scalar(
    x_prev: f64,
    x_curr: f64,
    grad_value: f64,
    cfg: &FracGradConfig,
) -> Result<f64> {
    cfg.validate()?;
    let scale = if cfg.alpha == 1.0 {
        1.0
    } else {
        let base = (x_curr - x_prev).abs() + cfg.delta_offset;
        let exponent = 1.0 - cfg.alpha;
        if base == 0.0 && exponent < 0.0 {
            return Err(Error::SingularPower { exponent });
        }
        base.powf(exponent) / gamma(2.0 - cfg.alpha)?
    };
    Ok(x_curr - cfg.mu * grad_value * scale)
}

/// Applies one fractional-order update to a parameter tensor.
///
/// `grad` is the plain first-order gradient of the loss with respect to
/// `params`; the fractional scale is applied here. In synchronous mode the
/// current gradient is scaled, in lagged mode the gradient cached from the
/// previous iteration is used instead (falling back to the current one at
/// iteration zero, when no history exists). At iteration zero with
/// [`FirstStepMode::IntegerOrder`] the scale is forced to one.
pub fn apply_update(
    params: &Tensor,
    grad: &Tensor,
    state: &OptimizerState,
    cfg: &FracGradConfig,
) -> Result<(Tensor, OptimizerState)> {
    if params.shape() != grad.shape() {
        return Err(Error::ShapeMismatch {
            op: "apply_update",
            left: params.shape().to_vec(),
            right: grad.shape().to_vec(),
        });
    }
    if params.shape() != state.prev_params.shape() {
        return Err(Error::ShapeMismatch {
            op: "apply_update",
            left: params.shape().to_vec(),
            right: state.prev_params.shape().to_vec(),
        });
    }

    let first_integer =
        state.iteration == 0 && cfg.first_step_mode == FirstStepMode::IntegerOrder;
    let gradient = match cfg.timing_mode {
        TimingMode::Synchronous => grad,
        TimingMode::Lagged => state.prev_grad.as_ref().unwrap_or(grad),
    };
    let scaled = if first_integer || cfg.alpha == 1.0 {
        gradient.clone()
    } else {
        let delta = params.sub(&state.prev_params)?;
        gradient.hadamard(&frac_scale(&delta, cfg)?)?
    };
    let new_params = params.sub(&scaled.scale(cfg.mu))?;
    let new_state = OptimizerState {
        prev_params: params.clone(),
        prev_grad: match cfg.timing_mode {
            TimingMode::Lagged => Some(grad.clone()),
            TimingMode::Synchronous => None,
        },
        iteration: state.iteration + 1,
    };
    Ok((new_params, new_state))
}

/// The fractional updating gradient: the raw first-order gradient rescaled
/// by the history-dependent factor. This is the quantity the update rule
/// subtracts (times the learning rate) once training is past the first
/// step.
pub fn fractional_gradient(
    raw_grad: &Tensor,
    params: &Tensor,
    state: &OptimizerState,
    cfg: &FracGradConfig,
) -> Result<Tensor> {
    let delta = params.sub(&state.prev_params)?;
    raw_grad.hadamard(&frac_scale(&delta, cfg)?)
}
