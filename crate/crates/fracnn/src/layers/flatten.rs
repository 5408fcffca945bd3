//! Reshape between the 4-D convolutional section and the 2-D dense
//! section. Sample `s` of a `[m x h x w x c]` block becomes column `s` of a
//! `[(h*w*c) x m]` matrix, features in (height, width, channel) raster
//! order. The backward direction is the exact inverse.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn flatten_forward(input: &Tensor) -> Result<Tensor> {
    if input.rank() != 4 {
        return Err(Error::InvalidShape {
            shape: input.shape().to_vec(),
            reason: "flatten expects a rank-4 input".into(),
        });
    }
    let s = input.shape();
    let (m, features) = (s[0], s[1] * s[2] * s[3]);
    let src = input.data();
    let mut out = vec![0.0; features * m];
    for sample in 0..m {
        for j in 0..features {
            out[j * m + sample] = src[sample * features + j];
        }
    }
    Tensor::new(vec![features, m], out)
}

pub fn flatten_backward(upstream: &Tensor, original_shape: &[usize]) -> Result<Tensor> {
    let (features, m) = upstream.dims2("flatten backward")?;
    if original_shape.len() != 4
        || original_shape[0] != m
        || original_shape[1] * original_shape[2] * original_shape[3] != features
    {
        return Err(Error::ShapeMismatch {
            op: "flatten backward",
            left: upstream.shape().to_vec(),
            right: original_shape.to_vec(),
        });
    }
    let src = upstream.data();
    let mut out = vec![0.0; m * features];
    for sample in 0..m {
        for j in 0..features {
            out[sample * features + j] = src[j * m + sample];
        }
    }
    Tensor::new(original_shape.to_vec(), out)
}

/// Stateful wrapper remembering the forward shape for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct FlattenLayer {
    cached_shape: Option<Vec<usize>>,
}

impl FlattenLayer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        self.cached_shape = Some(input.shape().to_vec());
        flatten_forward(input)
    }

    pub fn backward(&self, upstream: &Tensor) -> Result<Tensor> {
        let shape = self.cached_shape.as_ref().ok_or(Error::MissingCache)?;
        flatten_backward(upstream, shape)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_convention() {
        let input = Tensor::new(vec![1, 2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let flat = flatten_forward(&input).unwrap();
        assert_eq!(flat.shape(), &[4, 1]);
        assert_eq!(flat.data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn batch_columns_stay_per_sample() {
        // two samples with distinct values: column s holds sample s
        let input = Tensor::new(
            vec![2, 1, 2, 1],
            vec![10.0, 11.0, 20.0, 21.0],
        )
        .unwrap();
        let flat = flatten_forward(&input).unwrap();
        assert_eq!(flat.shape(), &[2, 2]);
        assert_eq!(flat.data(), &[10.0, 20.0, 11.0, 21.0]);
    }

    proptest! {
        #[test]
        fn forward_then_backward_is_identity(
            vals in proptest::collection::vec(-100.0f64..100.0, 24),
        ) {
            let input = Tensor::new(vec![2, 2, 3, 2], vals).unwrap();
            let flat = flatten_forward(&input).unwrap();
            let back = flatten_backward(&flat, input.shape()).unwrap();
            prop_assert_eq!(back, input);
        }
    }
}
