//! Fully connected layer operating on `[features x batch]` columns.

use rand::Rng;

use crate::activation::ActivationKind;
use crate::error::{Error, Result};
use crate::fracgrad::{apply_update, fractional_gradient, FracGradConfig, OptimizerState};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
struct DenseCache {
    /// Input of the forward pass, `[n_in x m]`.
    input: Tensor,
    /// Pre-activation `z = w * input + bias`, `[n_out x m]`.
    pre_activation: Tensor,
}

#[derive(Debug, Clone)]
pub struct DenseLayer {
    weights: Tensor, // [n_out x n_in]
    bias: Tensor,    // [n_out]
    activation: ActivationKind,
    opt_w: OptimizerState,
    opt_b: OptimizerState,
    cache: Option<DenseCache>,
}

impl DenseLayer {
    /// New layer with weights and bias drawn uniformly from
    /// `[-init_range, init_range)`; weights are drawn first, row-major.
    pub fn new(
        n_out: usize,
        n_in: usize,
        activation: ActivationKind,
        rng: &mut impl Rng,
        init_range: f64,
    ) -> Result<Self> {
        let w: Vec<f64> = (0..n_out * n_in)
            .map(|_| rng.gen_range(-init_range..init_range))
            .collect();
        let b: Vec<f64> = (0..n_out)
            .map(|_| rng.gen_range(-init_range..init_range))
            .collect();
        Self::with_params(
            Tensor::new(vec![n_out, n_in], w)?,
            Tensor::from_vec(b)?,
            activation,
        )
    }

    pub fn with_params(weights: Tensor, bias: Tensor, activation: ActivationKind) -> Result<Self> {
        let (n_out, _) = weights.dims2("dense weights")?;
        if bias.shape() != [n_out] {
            return Err(Error::ShapeMismatch {
                op: "dense bias",
                left: weights.shape().to_vec(),
                right: bias.shape().to_vec(),
            });
        }
        let opt_w = OptimizerState::new(&weights);
        let opt_b = OptimizerState::new(&bias);
        Ok(Self {
            weights,
            bias,
            activation,
            opt_w,
            opt_b,
            cache: None,
        })
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut Tensor {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut Tensor {
        &mut self.bias
    }

    pub fn params_mut(&mut self) -> (&mut Tensor, &mut Tensor) {
        (&mut self.weights, &mut self.bias)
    }

    pub fn activation(&self) -> ActivationKind {
        self.activation
    }

    pub fn output_size(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn input_size(&self) -> usize {
        self.weights.shape()[1]
    }

    /// `f(w * input + bias)` with the bias broadcast over batch columns.
    /// Caches the input and the pre-activation.
    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let (n_in, _m) = input.dims2("dense forward")?;
        if n_in != self.input_size() {
            return Err(Error::ShapeMismatch {
                op: "dense forward",
                left: self.weights.shape().to_vec(),
                right: input.shape().to_vec(),
            });
        }
        let mut z = self.weights.matmul(input)?;
        let (n_out, m) = z.dims2("dense forward")?;
        {
            let zd = z.data_mut();
            let bd = self.bias.data();
            for i in 0..n_out {
                let row = &mut zd[i * m..(i + 1) * m];
                for v in row {
                    *v += bd[i];
                }
            }
        }
        let out = z.map(|x| self.activation.apply(x));
        self.cache = Some(DenseCache {
            input: input.clone(),
            pre_activation: z,
        });
        Ok(out)
    }

    /// First-order backward pass: returns the gradient flowing to the
    /// previous layer and the raw (unscaled) parameter gradients, summed
    /// over the batch.
    pub fn backward_integer(&self, upstream: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
        let cache = self.cache.as_ref().ok_or(Error::MissingCache)?;
        if upstream.shape() != cache.pre_activation.shape() {
            return Err(Error::ShapeMismatch {
                op: "dense backward",
                left: upstream.shape().to_vec(),
                right: cache.pre_activation.shape().to_vec(),
            });
        }
        let dz = upstream.hadamard(&cache.pre_activation.map(|x| self.activation.derivative(x)))?;
        let downstream = self.weights.matmul_transpose_left(&dz)?;
        let grad_w = dz.matmul_transpose_right(&cache.input)?;
        let grad_b = dz.reduce_sum(&[1])?;
        Ok((downstream, grad_w, grad_b))
    }

    /// Backward pass returning the fractional updating gradients: the raw
    /// gradients rescaled by the parameter-change factor. The downstream
    /// gradient is identical to [`Self::backward_integer`]'s and does not
    /// depend on the fractional order.
    pub fn backward(
        &self,
        upstream: &Tensor,
        cfg: &FracGradConfig,
    ) -> Result<(Tensor, Tensor, Tensor)> {
        let (downstream, raw_w, raw_b) = self.backward_integer(upstream)?;
        let grad_w = fractional_gradient(&raw_w, &self.weights, &self.opt_w, cfg)?;
        let grad_b = fractional_gradient(&raw_b, &self.bias, &self.opt_b, cfg)?;
        Ok((downstream, grad_w, grad_b))
    }

    /// Updates weights and bias from raw first-order gradients; the
    /// fractional scaling happens inside the update rule.
    pub fn apply_updates(
        &mut self,
        raw_grad_w: &Tensor,
        raw_grad_b: &Tensor,
        cfg: &FracGradConfig,
    ) -> Result<()> {
        let (w, sw) = apply_update(&self.weights, raw_grad_w, &self.opt_w, cfg)?;
        let (b, sb) = apply_update(&self.bias, raw_grad_b, &self.opt_b, cfg)?;
        self.weights = w;
        self.opt_w = sw;
        self.bias = b;
        self.opt_b = sb;
        Ok(())
    }
}
