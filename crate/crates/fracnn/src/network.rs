//! Sequential network composition, the LeNet builder, the training loop
//! and evaluation.
//!
//! The backward sweep keeps plain chain-rule gradients flowing between
//! layers; each parametric layer hands its raw gradient to the update
//! rule, which applies the fractional rescaling.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::activation::ActivationKind;
use crate::error::{Error, Result};
use crate::fracgrad::FracGradConfig;
use crate::layers::{ConvLayer, DenseLayer, FlattenLayer, PoolKind, PoolLayer};
use crate::loss::{loss_gradient, loss_value, LossKind};
use crate::tensor::Tensor;

/// A batch-major image set `[n x h x w x c]` with one-hot label columns
/// `[classes x n]`.
#[derive(Debug, Clone)]
pub struct LabeledImages {
    pub images: Tensor,
    pub labels: Tensor,
}

impl LabeledImages {
    pub fn new(images: Tensor, labels: Tensor) -> Result<Self> {
        if images.rank() != 4 || labels.rank() != 2 || images.shape()[0] != labels.shape()[1] {
            return Err(Error::ShapeMismatch {
                op: "labeled images",
                left: images.shape().to_vec(),
                right: labels.shape().to_vec(),
            });
        }
        Ok(Self { images, labels })
    }

    pub fn len(&self) -> usize {
        self.images.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Copies the selected samples into contiguous batch tensors.
    pub fn gather(&self, indices: &[usize]) -> Result<(Tensor, Tensor)> {
        let s = self.images.shape();
        let (h, w, c) = (s[1], s[2], s[3]);
        let sample = h * w * c;
        let k = self.labels.shape()[0];
        let n = self.len();
        let m = indices.len();
        let mut images = vec![0.0; m * sample];
        let mut labels = vec![0.0; k * m];
        let src_i = self.images.data();
        let src_l = self.labels.data();
        for (bi, &idx) in indices.iter().enumerate() {
            images[bi * sample..(bi + 1) * sample]
                .copy_from_slice(&src_i[idx * sample..(idx + 1) * sample]);
            for row in 0..k {
                labels[row * m + bi] = src_l[row * n + idx];
            }
        }
        Ok((
            Tensor::new(vec![m, h, w, c], images)?,
            Tensor::new(vec![k, m], labels)?,
        ))
    }
}

/// Input accepted by a network: image blocks or plain feature columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputShape {
    Image {
        height: usize,
        width: usize,
        channels: usize,
    },
    Features(usize),
}

#[derive(Debug, Clone)]
pub enum LayerSpec {
    Conv {
        out_channels: usize,
        kernel_size: usize,
        stride: usize,
        padding: usize,
        activation: ActivationKind,
    },
    Pool {
        window: usize,
        stride: usize,
        kind: PoolKind,
    },
    Flatten,
    Dense {
        units: usize,
        activation: ActivationKind,
    },
}

/// Ordered layer descriptors plus the loss; geometry is validated before a
/// network is built.
#[derive(Debug, Clone)]
pub struct NetworkSpec {
    pub input: InputShape,
    pub layers: Vec<LayerSpec>,
    pub loss: LossKind,
}

impl NetworkSpec {
    /// Walks the layer chain checking shape compatibility: convolution and
    /// pooling may only appear before the single flatten, dense layers
    /// only after it (or anywhere for feature inputs, which need no
    /// flatten at all).
    pub fn validate(&self) -> Result<()> {
        let mut image_dims = match self.input {
            InputShape::Image {
                height,
                width,
                channels,
            } => Some((height, width, channels)),
            InputShape::Features(_) => None,
        };
        let mut features = match self.input {
            InputShape::Features(f) => Some(f),
            InputShape::Image { .. } => None,
        };
        let mut flatten_count = 0;
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerSpec::Conv {
                    out_channels,
                    kernel_size,
                    stride,
                    padding,
                    ..
                } => {
                    let (h, w, _c) = image_dims.ok_or_else(|| {
                        Error::InvalidGeometry(format!(
                            "layer {i}: convolution after the flatten boundary"
                        ))
                    })?;
                    if *stride == 0 {
                        return Err(Error::InvalidGeometry(format!("layer {i}: stride 0")));
                    }
                    let (hp, wp) = (h + 2 * padding, w + 2 * padding);
                    if hp < *kernel_size || wp < *kernel_size {
                        return Err(Error::InvalidGeometry(format!(
                            "layer {i}: kernel {kernel_size} larger than padded input {hp}x{wp}"
                        )));
                    }
                    image_dims = Some((
                        (hp - kernel_size) / stride + 1,
                        (wp - kernel_size) / stride + 1,
                        *out_channels,
                    ));
                }
                LayerSpec::Pool { window, stride, .. } => {
                    let (h, w, c) = image_dims.ok_or_else(|| {
                        Error::InvalidGeometry(format!(
                            "layer {i}: pooling after the flatten boundary"
                        ))
                    })?;
                    if *stride == 0 || *window == 0 || h < *window || w < *window {
                        return Err(Error::InvalidGeometry(format!(
                            "layer {i}: pool window {window} stride {stride} on {h}x{w}"
                        )));
                    }
                    image_dims = Some((
                        (h - window) / stride + 1,
                        (w - window) / stride + 1,
                        c,
                    ));
                }
                LayerSpec::Flatten => {
                    flatten_count += 1;
                    let (h, w, c) = image_dims.ok_or_else(|| {
                        Error::InvalidGeometry(format!("layer {i}: duplicate flatten"))
                    })?;
                    features = Some(h * w * c);
                    image_dims = None;
                }
                LayerSpec::Dense { units, .. } => {
                    if features.is_none() {
                        return Err(Error::InvalidGeometry(format!(
                            "layer {i}: dense layer before flatten"
                        )));
                    }
                    features = Some(*units);
                }
            }
        }
        match self.input {
            InputShape::Image { .. } if flatten_count != 1 => {
                return Err(Error::InvalidGeometry(format!(
                    "image networks need exactly one flatten, found {flatten_count}"
                )));
            }
            InputShape::Features(_) if flatten_count != 0 => {
                return Err(Error::InvalidGeometry(
                    "feature networks must not contain a flatten".into(),
                ));
            }
            _ => {}
        }
        if features.is_none() {
            return Err(Error::InvalidGeometry(
                "network must end in a dense section".into(),
            ));
        }
        if !matches!(self.layers.last(), Some(LayerSpec::Dense { .. })) {
            return Err(Error::InvalidGeometry(
                "last layer must be dense".into(),
            ));
        }
        Ok(())
    }

    /// Output dimension of the final dense layer.
    pub fn output_classes(&self) -> usize {
        match self.layers.last() {
            Some(LayerSpec::Dense { units, .. }) => *units,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone)]
enum LayerNode {
    Conv(ConvLayer),
    Pool(PoolLayer),
    Flatten(FlattenLayer),
    Dense(DenseLayer),
}

#[derive(Debug, Clone)]
pub struct Network {
    nodes: Vec<LayerNode>,
    loss: LossKind,
}

/// All per-layer results of one backward sweep: the gradient entering each
/// layer's input, the raw parameter gradients and the fractional updating
/// gradients (raw gradients rescaled by the parameter-change factor).
pub struct BackwardTrace {
    pub downstreams: Vec<Tensor>,
    pub raw_grads: Vec<Option<(Tensor, Tensor)>>,
    pub fractional_grads: Vec<Option<(Tensor, Tensor)>>,
}

impl Network {
    pub fn build(spec: &NetworkSpec, seed: u64, init_range: f64) -> Result<Self> {
        if init_range <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "init_range must be positive, got {init_range}"
            )));
        }
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut image_channels = match spec.input {
            InputShape::Image { channels, .. } => Some(channels),
            InputShape::Features(_) => None,
        };
        let mut image_hw = match spec.input {
            InputShape::Image { height, width, .. } => Some((height, width)),
            InputShape::Features(_) => None,
        };
        let mut features = match spec.input {
            InputShape::Features(f) => Some(f),
            InputShape::Image { .. } => None,
        };
        let mut nodes = Vec::with_capacity(spec.layers.len());
        for layer in &spec.layers {
            match layer {
                LayerSpec::Conv {
                    out_channels,
                    kernel_size,
                    stride,
                    padding,
                    activation,
                } => {
                    let c_in = image_channels.expect("validated");
                    let conv = ConvLayer::new(
                        c_in,
                        *out_channels,
                        *kernel_size,
                        *stride,
                        *padding,
                        *activation,
                        &mut rng,
                        init_range,
                    )?;
                    let (h, w) = image_hw.expect("validated");
                    image_hw = Some(conv.output_hw(h, w)?);
                    image_channels = Some(*out_channels);
                    nodes.push(LayerNode::Conv(conv));
                }
                LayerSpec::Pool {
                    window,
                    stride,
                    kind,
                } => {
                    let pool = PoolLayer::new(*window, *stride, *kind)?;
                    let (h, w) = image_hw.expect("validated");
                    image_hw = Some(pool.output_hw(h, w)?);
                    nodes.push(LayerNode::Pool(pool));
                }
                LayerSpec::Flatten => {
                    let (h, w) = image_hw.take().expect("validated");
                    features = Some(h * w * image_channels.take().expect("validated"));
                    nodes.push(LayerNode::Flatten(FlattenLayer::new()));
                }
                LayerSpec::Dense { units, activation } => {
                    let n_in = features.expect("validated");
                    nodes.push(LayerNode::Dense(DenseLayer::new(
                        *units,
                        n_in,
                        *activation,
                        &mut rng,
                        init_range,
                    )?));
                    features = Some(*units);
                }
            }
        }
        Ok(Self {
            nodes,
            loss: spec.loss,
        })
    }

    pub fn loss_kind(&self) -> LossKind {
        self.loss
    }

    /// Forward pass producing output columns `[classes x m]`.
    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let mut current = input.clone();
        for node in &mut self.nodes {
            current = match node {
                LayerNode::Conv(l) => l.forward(&current)?,
                LayerNode::Pool(l) => l.forward(&current)?,
                LayerNode::Flatten(l) => l.forward(&current)?,
                LayerNode::Dense(l) => l.forward(&current)?,
            };
        }
        Ok(current)
    }

    /// Backward sweep from the loss gradient, collecting raw parameter
    /// gradients. The gradient entering the first layer is not formed
    /// unless requested, since nothing consumes it during training.
    fn backward_raw(
        &self,
        output_grad: &Tensor,
        keep_all_downstreams: bool,
    ) -> Result<(Vec<Option<Tensor>>, Vec<Option<(Tensor, Tensor)>>)> {
        let mut downstreams = vec![None; self.nodes.len()];
        let mut grads: Vec<Option<(Tensor, Tensor)>> = vec![None; self.nodes.len()];
        let mut upstream = output_grad.clone();
        for (i, node) in self.nodes.iter().enumerate().rev() {
            let need_down = i > 0 || keep_all_downstreams;
            let downstream = match node {
                LayerNode::Conv(l) => {
                    let (d, gw, gb) = l.backward_raw_parts(&upstream, need_down)?;
                    grads[i] = Some((gw, gb));
                    d
                }
                LayerNode::Pool(l) => Some(l.backward(&upstream)?),
                LayerNode::Flatten(l) => Some(l.backward(&upstream)?),
                LayerNode::Dense(l) => {
                    let (d, gw, gb) = l.backward_integer(&upstream)?;
                    grads[i] = Some((gw, gb));
                    Some(d)
                }
            };
            if let Some(d) = downstream {
                if keep_all_downstreams {
                    downstreams[i] = Some(d.clone());
                }
                if i > 0 {
                    upstream = d;
                }
            }
        }
        Ok((downstreams, grads))
    }

    /// Full backward sweep for inspection: every downstream gradient plus
    /// raw and fractional parameter gradients.
    pub fn backward_trace(
        &self,
        output_grad: &Tensor,
        cfg: &FracGradConfig,
    ) -> Result<BackwardTrace> {
        let (downstreams, raw_grads) = self.backward_raw(output_grad, true)?;
        let mut fractional: Vec<Option<(Tensor, Tensor)>> = vec![None; self.nodes.len()];
        let mut upstream = output_grad.clone();
        for (i, node) in self.nodes.iter().enumerate().rev() {
            match node {
                LayerNode::Conv(l) => {
                    let (_, gw, gb) = l.backward(&upstream, cfg)?;
                    fractional[i] = Some((gw, gb));
                }
                LayerNode::Dense(l) => {
                    let (_, gw, gb) = l.backward(&upstream, cfg)?;
                    fractional[i] = Some((gw, gb));
                }
                _ => {}
            }
            if i > 0 {
                upstream = downstreams[i].clone().expect("full trace keeps downstreams");
            }
        }
        Ok(BackwardTrace {
            downstreams: downstreams
                .into_iter()
                .map(|d| d.expect("full trace keeps downstreams"))
                .collect(),
            raw_grads,
            fractional_grads: fractional,
        })
    }

    /// One training step: forward, loss, backward, fractional updates.
    /// Returns the batch loss measured before the update.
    pub fn train_step(
        &mut self,
        images: &Tensor,
        labels: &Tensor,
        cfg: &FracGradConfig,
    ) -> Result<f64> {
        let outputs = self.forward(images)?;
        let loss = loss_value(self.loss, &outputs, labels)?;
        let lgrad = loss_gradient(self.loss, &outputs, labels)?;
        let (_, grads) = self.backward_raw(&lgrad, false)?;
        for (node, grad) in self.nodes.iter_mut().zip(grads) {
            if let Some((gw, gb)) = grad {
                match node {
                    LayerNode::Conv(l) => l.apply_updates(&gw, &gb, cfg)?,
                    LayerNode::Dense(l) => l.apply_updates(&gw, &gb, cfg)?,
                    _ => unreachable!("only parametric layers produce gradients"),
                }
            }
        }
        Ok(loss)
    }

    /// Loss of a batch without updating anything (still refreshes caches).
    pub fn loss_on_batch(&mut self, images: &Tensor, labels: &Tensor) -> Result<f64> {
        let outputs = self.forward(images)?;
        loss_value(self.loss, &outputs, labels)
    }

    /// Fraction of samples whose output argmax matches the label argmax;
    /// ties resolve to the lowest class index.
    pub fn evaluate(&mut self, set: &LabeledImages) -> Result<f64> {
        let n = set.len();
        if n == 0 {
            return Err(Error::EmptyEvalSet);
        }
        let k = set.labels.shape()[0];
        let chunk = 200usize;
        let mut correct = 0usize;
        let labels = set.labels.data();
        let mut start = 0;
        while start < n {
            let end = (start + chunk).min(n);
            let indices: Vec<usize> = (start..end).collect();
            let (images, _) = set.gather(&indices)?;
            let outputs = self.forward(&images)?;
            let m = end - start;
            let od = outputs.data();
            for col in 0..m {
                let mut best_row = 0;
                let mut best = od[col];
                for row in 1..k {
                    let v = od[row * m + col];
                    if v > best {
                        best = v;
                        best_row = row;
                    }
                }
                let mut label_row = 0;
                let mut label_best = labels[start + col];
                for row in 1..k {
                    let v = labels[row * n + start + col];
                    if v > label_best {
                        label_best = v;
                        label_row = row;
                    }
                }
                if best_row == label_row {
                    correct += 1;
                }
            }
            start = end;
        }
        Ok(correct as f64 / n as f64)
    }

    /// Parameter tensors in layer order (weights before bias).
    pub fn parameters(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for node in &self.nodes {
            match node {
                LayerNode::Conv(l) => {
                    out.push(l.weights());
                    out.push(l.bias());
                }
                LayerNode::Dense(l) => {
                    out.push(l.weights());
                    out.push(l.bias());
                }
                _ => {}
            }
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for node in &mut self.nodes {
            match node {
                LayerNode::Conv(l) => {
                    let (w, b) = l.params_mut();
                    out.push(w);
                    out.push(b);
                }
                LayerNode::Dense(l) => {
                    let (w, b) = l.params_mut();
                    out.push(w);
                    out.push(b);
                }
                _ => {}
            }
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|t| t.len()).sum()
    }
}

/// The LeNet-style architecture used by the experiments: two 5x5
/// convolution blocks with 2x2 max pooling, then dense 120-84-10 with a
/// linear head feeding the fused softmax loss.
pub fn lenet_spec(hidden_activation: ActivationKind) -> NetworkSpec {
    NetworkSpec {
        input: InputShape::Image {
            height: 28,
            width: 28,
            channels: 1,
        },
        layers: vec![
            LayerSpec::Conv {
                out_channels: 6,
                kernel_size: 5,
                stride: 1,
                padding: 2,
                activation: hidden_activation,
            },
            LayerSpec::Pool {
                window: 2,
                stride: 2,
                kind: PoolKind::Max,
            },
            LayerSpec::Conv {
                out_channels: 16,
                kernel_size: 5,
                stride: 1,
                padding: 0,
                activation: hidden_activation,
            },
            LayerSpec::Pool {
                window: 2,
                stride: 2,
                kind: PoolKind::Max,
            },
            LayerSpec::Flatten,
            LayerSpec::Dense {
                units: 120,
                activation: hidden_activation,
            },
            LayerSpec::Dense {
                units: 84,
                activation: hidden_activation,
            },
            LayerSpec::Dense {
                units: 10,
                activation: ActivationKind::Identity,
            },
        ],
        loss: LossKind::CrossEntropySoftmax,
    }
}

/// Builds the LeNet network with all weights and biases drawn uniformly
/// from `[-init_range, init_range)` using the seeded generator.
pub fn build_lenet(seed: u64, init_range: f64) -> Result<Network> {
    Network::build(&lenet_spec(ActivationKind::Relu), seed, init_range)
}

/// Training-run configuration. The defaults used by the experiment
/// harness are learning rate 0.1, batch 10, 6000 iterations, one epoch
/// and initialization range 0.1.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub frac: FracGradConfig,
    pub batch_size: usize,
    pub iterations: usize,
    pub epochs: usize,
    pub seed: u64,
    pub init_range: f64,
}

impl TrainConfig {
    pub fn paper_defaults(alpha: f64, seed: u64) -> Result<Self> {
        Ok(Self {
            frac: FracGradConfig::new(alpha, 0.1)?,
            batch_size: 10,
            iterations: 6000,
            epochs: 1,
            seed,
            init_range: 0.1,
        })
    }

    pub fn validate(&self, dataset_len: usize) -> Result<()> {
        self.frac.validate()?;
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidConfig(
                "batch size and epochs must be positive".into(),
            ));
        }
        if self.batch_size * self.iterations > self.epochs * dataset_len {
            return Err(Error::DatasetExhausted {
                step: 0,
                needed: self.batch_size * self.iterations,
                available: self.epochs * dataset_len,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Metrics {
    pub loss_series: Vec<f64>,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub wall_seconds: f64,
}

/// Trains for `cfg.iterations` steps, shuffling the sample order once per
/// epoch with the seeded generator, then evaluates train and test
/// accuracy. Batches never straddle an epoch boundary; a leftover smaller
/// than the batch size rolls over to the next epoch's permutation.
pub fn train(
    network: &mut Network,
    train_set: &LabeledImages,
    test_set: &LabeledImages,
    cfg: &TrainConfig,
) -> Result<Metrics> {
    let n = train_set.len();
    cfg.validate(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut epoch = 0usize;
    let mut cursor = 0usize;

    let mut loss_series = Vec::with_capacity(cfg.iterations);
    let started = Instant::now();
    for step in 0..cfg.iterations {
        if cursor + cfg.batch_size > n {
            epoch += 1;
            if epoch >= cfg.epochs {
                return Err(Error::DatasetExhausted {
                    step,
                    needed: cfg.batch_size,
                    available: n - cursor,
                });
            }
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let indices = &order[cursor..cursor + cfg.batch_size];
        cursor += cfg.batch_size;
        let (images, labels) = train_set.gather(indices)?;
        let loss = network.train_step(&images, &labels, &cfg.frac)?;
        loss_series.push(loss);
    }
    let wall_seconds = started.elapsed().as_secs_f64();

    let train_accuracy = network.evaluate(train_set)?;
    let test_accuracy = network.evaluate(test_set)?;
    Ok(Metrics {
        loss_series,
        train_accuracy,
        test_accuracy,
        wall_seconds,
    })
}
