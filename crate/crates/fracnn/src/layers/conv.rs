//! 2-D convolution over `[batch x height x width x channel]` blocks with a
//! square kernel.
//!
//! Two backward implementations are provided. The reference path follows
//! the per-cell accumulation loops literally and is the behavioural
//! contract; the vectorized path reuses the im2col patch matrix from the
//! forward pass and must agree with the reference to within 1e-12. The
//! per-channel scale factor of the fractional update is constant across
//! the spatial accumulation, so the vectorized path may apply it after
//! summing.

use rand::Rng;

use crate::activation::ActivationKind;
use crate::error::{Error, Result};
use crate::fracgrad::{apply_update, frac_scale, FracGradConfig, OptimizerState};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConvBackend {
    Reference,
    #[default]
    Vectorized,
}

#[derive(Debug, Clone)]
struct ConvCache {
    /// Unpadded input shape `[m, h, w, c_in]`.
    input_shape: Vec<usize>,
    /// Zero-padded input `[m, h + 2p, w + 2p, c_in]`.
    padded: Tensor,
    /// im2col matrix `[m*oh*ow, f*f*c_in]`, rows in output raster order.
    patches: Tensor,
    /// Pre-activation `[m, oh, ow, c_out]`.
    pre_activation: Tensor,
}

#[derive(Debug, Clone)]
pub struct ConvLayer {
    weights: Tensor, // [f, f, c_in, c_out]
    bias: Tensor,    // [c_out]
    stride: usize,
    padding: usize,
    activation: ActivationKind,
    backend: ConvBackend,
    opt_w: OptimizerState,
    opt_b: OptimizerState,
    cache: Option<ConvCache>,
}

impl ConvLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        stride: usize,
        padding: usize,
        activation: ActivationKind,
        rng: &mut impl Rng,
        init_range: f64,
    ) -> Result<Self> {
        let w: Vec<f64> = (0..kernel_size * kernel_size * in_channels * out_channels)
            .map(|_| rng.gen_range(-init_range..init_range))
            .collect();
        let b: Vec<f64> = (0..out_channels)
            .map(|_| rng.gen_range(-init_range..init_range))
            .collect();
        Self::with_params(
            Tensor::new(vec![kernel_size, kernel_size, in_channels, out_channels], w)?,
            Tensor::from_vec(b)?,
            stride,
            padding,
            activation,
        )
    }

    pub fn with_params(
        weights: Tensor,
        bias: Tensor,
        stride: usize,
        padding: usize,
        activation: ActivationKind,
    ) -> Result<Self> {
        if weights.rank() != 4 || weights.shape()[0] != weights.shape()[1] {
            return Err(Error::InvalidGeometry(format!(
                "convolution kernel must be square rank-4, got {:?}",
                weights.shape()
            )));
        }
        if stride == 0 {
            return Err(Error::InvalidGeometry("stride must be at least 1".into()));
        }
        let c_out = weights.shape()[3];
        if bias.shape() != [c_out] {
            return Err(Error::ShapeMismatch {
                op: "conv bias",
                left: weights.shape().to_vec(),
                right: bias.shape().to_vec(),
            });
        }
        let opt_w = OptimizerState::new(&weights);
        let opt_b = OptimizerState::new(&bias);
        Ok(Self {
            weights,
            bias,
            stride,
            padding,
            activation,
            backend: ConvBackend::default(),
            opt_w,
            opt_b,
            cache: None,
        })
    }

    pub fn with_backend(mut self, backend: ConvBackend) -> Self {
        self.backend = backend;
        self
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

    pub fn kernel_size(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[2]
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape()[3]
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn padding(&self) -> usize {
        self.padding
    }

    /// Output spatial size: `(in + 2*padding - kernel) / stride + 1`.
    pub fn output_hw(&self, in_h: usize, in_w: usize) -> Result<(usize, usize)> {
        let f = self.kernel_size();
        let (hp, wp) = (in_h + 2 * self.padding, in_w + 2 * self.padding);
        if hp < f || wp < f {
            return Err(Error::InvalidGeometry(format!(
                "input {in_h}x{in_w} with padding {} is smaller than kernel {f}",
                self.padding
            )));
        }
        Ok(((hp - f) / self.stride + 1, (wp - f) / self.stride + 1))
    }

    fn pad_input(&self, input: &Tensor) -> Result<Tensor> {
        let s = input.shape();
        let (m, h, w, c) = (s[0], s[1], s[2], s[3]);
        let p = self.padding;
        if p == 0 {
            return Ok(input.clone());
        }
        let (hp, wp) = (h + 2 * p, w + 2 * p);
        let mut padded = Tensor::zeros(vec![m, hp, wp, c])?;
        let src = input.data();
        let dst = padded.data_mut();
        let row = w * c;
        for sdx in 0..m {
            for y in 0..h {
                let from = (sdx * h + y) * row;
                let to = ((sdx * hp + y + p) * wp + p) * c;
                dst[to..to + row].copy_from_slice(&src[from..from + row]);
            }
        }
        Ok(padded)
    }

    fn build_patches(&self, padded: &Tensor, oh: usize, ow: usize) -> Result<Tensor> {
        let s = padded.shape();
        let (m, hp, wp, c) = (s[0], s[1], s[2], s[3]);
        let f = self.kernel_size();
        let cols = f * f * c;
        let run = f * c; // one kernel row over all channels is contiguous
        let mut patches = vec![0.0; m * oh * ow * cols];
        let src = padded.data();
        let mut q = 0;
        for sdx in 0..m {
            for h in 0..oh {
                let y0 = h * self.stride;
                for w in 0..ow {
                    let x0 = w * self.stride;
                    let dst_base = q * cols;
                    for f1 in 0..f {
                        let from = ((sdx * hp + y0 + f1) * wp + x0) * c;
                        let to = dst_base + f1 * run;
                        patches[to..to + run].copy_from_slice(&src[from..from + run]);
                    }
                    q += 1;
                }
            }
        }
        Tensor::new(vec![m * oh * ow, cols], patches)
    }

    /// Convolution, bias add and activation; caches the padded input, the
    /// patch matrix and the pre-activation.
    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        if input.rank() != 4 {
            return Err(Error::InvalidShape {
                shape: input.shape().to_vec(),
                reason: "convolution input must be rank 4".into(),
            });
        }
        let s = input.shape().to_vec();
        let (m, h, w, c_in) = (s[0], s[1], s[2], s[3]);
        if c_in != self.in_channels() {
            return Err(Error::ShapeMismatch {
                op: "conv forward",
                left: self.weights.shape().to_vec(),
                right: s,
            });
        }
        let (oh, ow) = self.output_hw(h, w)?;
        let padded = self.pad_input(input)?;
        let patches = self.build_patches(&padded, oh, ow)?;
        let f = self.kernel_size();
        let c_out = self.out_channels();
        let wre = self.weights.reshape(vec![f * f * c_in, c_out])?;
        let mut z = patches.matmul(&wre)?;
        {
            let zd = z.data_mut();
            let bd = self.bias.data();
            for chunk in zd.chunks_exact_mut(c_out) {
                for (v, &b) in chunk.iter_mut().zip(bd) {
                    *v += b;
                }
            }
        }
        let z = z.reshape(vec![m, oh, ow, c_out])?;
        let out = z.map(|x| self.activation.apply(x));
        self.cache = Some(ConvCache {
            input_shape: vec![m, h, w, c_in],
            padded,
            patches,
            pre_activation: z,
        });
        Ok(out)
    }

    fn crop_padding(&self, dpad: &Tensor, input_shape: &[usize]) -> Result<Tensor> {
        let p = self.padding;
        if p == 0 {
            return Ok(dpad.clone());
        }
        let (m, h, w, c) = (
            input_shape[0],
            input_shape[1],
            input_shape[2],
            input_shape[3],
        );
        let (hp, wp) = (h + 2 * p, w + 2 * p);
        let mut out = vec![0.0; m * h * w * c];
        let src = dpad.data();
        let row = w * c;
        for sdx in 0..m {
            for y in 0..h {
                let from = ((sdx * hp + y + p) * wp + p) * c;
                let to = (sdx * h + y) * row;
                out[to..to + row].copy_from_slice(&src[from..from + row]);
            }
        }
        Tensor::new(input_shape.to_vec(), out)
    }

    fn backward_impl(
        &self,
        upstream: &Tensor,
        need_downstream: bool,
        scales: Option<(&Tensor, &Tensor)>,
    ) -> Result<(Option<Tensor>, Tensor, Tensor)> {
        let cache = self.cache.as_ref().ok_or(Error::MissingCache)?;
        if upstream.shape() != cache.pre_activation.shape() {
            return Err(Error::ShapeMismatch {
                op: "conv backward",
                left: upstream.shape().to_vec(),
                right: cache.pre_activation.shape().to_vec(),
            });
        }
        match self.backend {
            ConvBackend::Vectorized => {
                self.backward_vectorized(cache, upstream, need_downstream, scales)
            }
            ConvBackend::Reference => {
                self.backward_reference(cache, upstream, need_downstream, scales)
            }
        }
    }

    fn backward_vectorized(
        &self,
        cache: &ConvCache,
        upstream: &Tensor,
        need_downstream: bool,
        scales: Option<(&Tensor, &Tensor)>,
    ) -> Result<(Option<Tensor>, Tensor, Tensor)> {
        let zs = cache.pre_activation.shape();
        let (m, oh, ow, c_out) = (zs[0], zs[1], zs[2], zs[3]);
        let q = m * oh * ow;
        let f = self.kernel_size();
        let c_in = self.in_channels();

        let dz = upstream.hadamard(&cache.pre_activation.map(|x| self.activation.derivative(x)))?;
        let dz2 = dz.reshape(vec![q, c_out])?;

        let mut grad_w = cache
            .patches
            .matmul_transpose_left(&dz2)?
            .reshape(vec![f, f, c_in, c_out])?;
        let mut grad_b = dz2.reduce_sum(&[0])?;
        if let Some((sw, sb)) = scales {
            grad_w = grad_w.hadamard(sw)?;
            grad_b = grad_b.hadamard(sb)?;
        }

        let downstream = if need_downstream {
            let wre = self.weights.reshape(vec![f * f * c_in, c_out])?;
            let dpatches = dz2.matmul_transpose_right(&wre)?;
            // scatter patch gradients back onto the padded grid
            let ps = cache.padded.shape();
            let (hp, wp) = (ps[1], ps[2]);
            let mut dpad = Tensor::zeros(vec![m, hp, wp, c_in])?;
            {
                let dst = dpad.data_mut();
                let src = dpatches.data();
                let cols = f * f * c_in;
                let run = f * c_in;
                let mut qi = 0;
                for sdx in 0..m {
                    for h in 0..oh {
                        let y0 = h * self.stride;
                        for w in 0..ow {
                            let x0 = w * self.stride;
                            let src_base = qi * cols;
                            for f1 in 0..f {
                                let to = ((sdx * hp + y0 + f1) * wp + x0) * c_in;
                                let from = src_base + f1 * run;
                                for i in 0..run {
                                    dst[to + i] += src[from + i];
                                }
                            }
                            qi += 1;
                        }
                    }
                }
            }
            Some(self.crop_padding(&dpad, &cache.input_shape)?)
        } else {
            None
        };
        Ok((downstream, grad_w, grad_b))
    }

    fn backward_reference(
        &self,
        cache: &ConvCache,
        upstream: &Tensor,
        need_downstream: bool,
        scales: Option<(&Tensor, &Tensor)>,
    ) -> Result<(Option<Tensor>, Tensor, Tensor)> {
        let zs = cache.pre_activation.shape();
        let (m, oh, ow, c_out) = (zs[0], zs[1], zs[2], zs[3]);
        let f = self.kernel_size();
        let c_in = self.in_channels();
        let ps = cache.padded.shape();
        let (hp, wp) = (ps[1], ps[2]);

        let dz = upstream.hadamard(&cache.pre_activation.map(|x| self.activation.derivative(x)))?;
        let dzd = dz.data();
        let pad = cache.padded.data();
        let wd = self.weights.data();

        let mut gw = vec![0.0; f * f * c_in * c_out];
        let mut gb = vec![0.0; c_out];
        let mut dpad = vec![0.0; m * hp * wp * c_in];

        for sdx in 0..m {
            for h in 0..oh {
                let y0 = h * self.stride;
                for w in 0..ow {
                    let x0 = w * self.stride;
                    let dz_base = ((sdx * oh + h) * ow + w) * c_out;
                    for co in 0..c_out {
                        let g = dzd[dz_base + co];
                        let scale_b = scales.map_or(1.0, |(_, sb)| sb.data()[co]);
                        gb[co] += g * scale_b;
                        for f1 in 0..f {
                            for f2 in 0..f {
                                let a_base = ((sdx * hp + y0 + f1) * wp + x0 + f2) * c_in;
                                let w_base = ((f1 * f + f2) * c_in) * c_out;
                                for ci in 0..c_in {
                                    let widx = w_base + ci * c_out + co;
                                    let scale_w = scales.map_or(1.0, |(sw, _)| sw.data()[widx]);
                                    gw[widx] += g * pad[a_base + ci] * scale_w;
                                    if need_downstream {
                                        dpad[a_base + ci] += g * wd[widx];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }

        let grad_w = Tensor::new(vec![f, f, c_in, c_out], gw)?;
        let grad_b = Tensor::from_vec(gb)?;
        let downstream = if need_downstream {
            let dpad = Tensor::new(vec![m, hp, wp, c_in], dpad)?;
            Some(self.crop_padding(&dpad, &cache.input_shape)?)
        } else {
            None
        };
        Ok((downstream, grad_w, grad_b))
    }

    /// First-order backward pass; see [`DenseLayer::backward_integer`] for
    /// the contract. The downstream gradient has the unpadded input shape.
    ///
    /// [`DenseLayer::backward_integer`]: crate::layers::DenseLayer::backward_integer
    pub fn backward_integer(&self, upstream: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
        let (d, gw, gb) = self.backward_impl(upstream, true, None)?;
        Ok((d.expect("downstream requested"), gw, gb))
    }

    pub(crate) fn backward_raw_parts(
        &self,
        upstream: &Tensor,
        need_downstream: bool,
    ) -> Result<(Option<Tensor>, Tensor, Tensor)> {
        self.backward_impl(upstream, need_downstream, None)
    }

    /// Backward pass returning the fractional updating gradients.
    pub fn backward(
        &self,
        upstream: &Tensor,
        cfg: &FracGradConfig,
    ) -> Result<(Tensor, Tensor, Tensor)> {
        let dw = self.weights.sub(&self.opt_w.prev_params)?;
        let db = self.bias.sub(&self.opt_b.prev_params)?;
        let sw = frac_scale(&dw, cfg)?;
        let sb = frac_scale(&db, cfg)?;
        let (d, gw, gb) = self.backward_impl(upstream, true, Some((&sw, &sb)))?;
        Ok((d.expect("downstream requested"), gw, gb))
    }

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
