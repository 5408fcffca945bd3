//! Spatial pooling over `[batch x height x width x channel]` blocks.
//! Pooling has no trainable parameters, so it never takes part in the
//! fractional update; it only routes gradients.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    Max,
    Average,
}

#[derive(Debug, Clone)]
struct PoolCache {
    input_shape: Vec<usize>,
    /// Flat input index of the window maximum per output element (max only).
    argmax: Option<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct PoolLayer {
    window: usize,
    stride: usize,
    kind: PoolKind,
    cache: Option<PoolCache>,
}

impl PoolLayer {
    pub fn new(window: usize, stride: usize, kind: PoolKind) -> Result<Self> {
        if window == 0 || stride == 0 {
            return Err(Error::InvalidGeometry(
                "pool window and stride must be at least 1".into(),
            ));
        }
        Ok(Self {
            window,
            stride,
            kind,
            cache: None,
        })
    }

    pub fn kind(&self) -> PoolKind {
        self.kind
    }

    pub fn output_hw(&self, in_h: usize, in_w: usize) -> Result<(usize, usize)> {
        if in_h < self.window || in_w < self.window {
            return Err(Error::InvalidGeometry(format!(
                "input {in_h}x{in_w} smaller than pool window {}",
                self.window
            )));
        }
        Ok((
            (in_h - self.window) / self.stride + 1,
            (in_w - self.window) / self.stride + 1,
        ))
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        if input.rank() != 4 {
            return Err(Error::InvalidShape {
                shape: input.shape().to_vec(),
                reason: "pool input must be rank 4".into(),
            });
        }
        let s = input.shape().to_vec();
        let (m, h, w, c) = (s[0], s[1], s[2], s[3]);
        let (oh, ow) = self.output_hw(h, w)?;
        let mut out = vec![0.0; m * oh * ow * c];
        let mut argmax = if self.kind == PoolKind::Max {
            Some(vec![0usize; m * oh * ow * c])
        } else {
            None
        };
        let src = input.data();
        let window_area = (self.window * self.window) as f64;
        for sdx in 0..m {
            for hy in 0..oh {
                let y0 = hy * self.stride;
                for wx in 0..ow {
                    let x0 = wx * self.stride;
                    for ch in 0..c {
                        let out_idx = ((sdx * oh + hy) * ow + wx) * c + ch;
                        match self.kind {
                            PoolKind::Max => {
                                let mut best = f64::NEG_INFINITY;
                                let mut best_idx = 0;
                                for dy in 0..self.window {
                                    for dx in 0..self.window {
                                        let idx =
                                            ((sdx * h + y0 + dy) * w + x0 + dx) * c + ch;
                                        // strict > keeps the first maximum on ties
                                        if src[idx] > best {
                                            best = src[idx];
                                            best_idx = idx;
                                        }
                                    }
                                }
                                out[out_idx] = best;
                                argmax.as_mut().unwrap()[out_idx] = best_idx;
                            }
                            PoolKind::Average => {
                                let mut acc = 0.0;
                                for dy in 0..self.window {
                                    for dx in 0..self.window {
                                        acc += src[((sdx * h + y0 + dy) * w + x0 + dx) * c + ch];
                                    }
                                }
                                out[out_idx] = acc / window_area;
                            }
                        }
                    }
                }
            }
        }
        self.cache = Some(PoolCache {
            input_shape: s,
            argmax,
        });
        Tensor::new(vec![m, oh, ow, c], out)
    }

    /// Max: routes each upstream value to the cached argmax position.
    /// Average: distributes each value uniformly over its window.
    pub fn backward(&self, upstream: &Tensor) -> Result<Tensor> {
        let cache = self.cache.as_ref().ok_or(Error::MissingCache)?;
        let mut out = Tensor::zeros(cache.input_shape.clone())?;
        match self.kind {
            PoolKind::Max => {
                let argmax = cache.argmax.as_ref().expect("max pool caches argmax");
                if upstream.len() != argmax.len() {
                    return Err(Error::ShapeMismatch {
                        op: "pool backward",
                        left: upstream.shape().to_vec(),
                        right: cache.input_shape.clone(),
                    });
                }
                let dst = out.data_mut();
                for (g, &idx) in upstream.data().iter().zip(argmax) {
                    dst[idx] += g;
                }
            }
            PoolKind::Average => {
                let s = &cache.input_shape;
                let (m, h, w, c) = (s[0], s[1], s[2], s[3]);
                let (oh, ow) = self.output_hw(h, w)?;
                if upstream.shape() != [m, oh, ow, c] {
                    return Err(Error::ShapeMismatch {
                        op: "pool backward",
                        left: upstream.shape().to_vec(),
                        right: vec![m, oh, ow, c],
                    });
                }
                let share = 1.0 / (self.window * self.window) as f64;
                let up = upstream.data();
                let dst = out.data_mut();
                for sdx in 0..m {
                    for hy in 0..oh {
                        let y0 = hy * self.stride;
                        for wx in 0..ow {
                            let x0 = wx * self.stride;
                            for ch in 0..c {
                                let g = up[((sdx * oh + hy) * ow + wx) * c + ch] * share;
                                for dy in 0..self.window {
                                    for dx in 0..self.window {
                                        dst[((sdx * h + y0 + dy) * w + x0 + dx) * c + ch] += g;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}
