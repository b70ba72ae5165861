//! Feed-forward network representation, JSON loading and concrete evaluation.
//!
//! Networks are sequences of dense, conv2d, flatten and ReLU layers over a
//! `(channels, height, width)` input. The on-disk format is JSON with layer
//! objects tagged by `"type"`; floats are read as 64-bit. Only ReLU
//! activations are accepted and the final layer must be dense (logits carry
//! no activation).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{convolve2d_strided, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: String, message: String },
    #[error("layer {layer}: dense bias length mismatch (weights have {rows} rows, bias has {bias} entries)")]
    DenseBiasMismatch {
        layer: usize,
        rows: usize,
        bias: usize,
    },
    #[error("layer {layer}: conv2d bias length mismatch ({kernels} kernels, bias has {bias} entries)")]
    ConvBiasMismatch {
        layer: usize,
        kernels: usize,
        bias: usize,
    },
    #[error("layers {a} and {b} do not compose: {detail}")]
    ShapeCompose { a: usize, b: usize, detail: String },
    #[error("layer {layer}: {detail}")]
    BadLayer { layer: usize, detail: String },
    #[error("network must end in a dense layer")]
    FinalLayerNotDense,
    #[error("network needs at least one layer")]
    Empty,
    #[error("input has {got} elements but the network expects {expected}")]
    BadInput { expected: usize, got: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// One network layer.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// `y = W x + b`, weights row-major `(out, in)`.
    Dense { weights: Tensor, bias: Vec<f64> },
    /// Per-output-channel kernels of shape `(in_channels, kh, kw)`.
    Conv2d {
        kernels: Vec<Tensor>,
        bias: Vec<f64>,
        stride: usize,
        padding: usize,
    },
    Flatten,
    Relu,
}

/// Shape of the value flowing between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ShapeState {
    Spatial { c: usize, h: usize, w: usize },
    Flat(usize),
}

impl ShapeState {
    pub(crate) fn count(&self) -> usize {
        match *self {
            ShapeState::Spatial { c, h, w } => c * h * w,
            ShapeState::Flat(n) => n,
        }
    }
}

/// A validated feed-forward network.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    name: String,
    input_shape: (usize, usize, usize),
    layers: Vec<Layer>,
    /// `states[i]` is the input shape of layer `i`; the last entry is the
    /// output shape.
    states: Vec<ShapeState>,
}

impl Network {
    /// Validates layer composition and builds the network.
    pub fn new(
        name: String,
        input_shape: (usize, usize, usize),
        layers: Vec<Layer>,
    ) -> Result<Self, NetworkError> {
        if layers.is_empty() {
            return Err(NetworkError::Empty);
        }
        if !matches!(layers.last(), Some(Layer::Dense { .. })) {
            return Err(NetworkError::FinalLayerNotDense);
        }
        let (c, h, w) = input_shape;
        let mut states = vec![ShapeState::Spatial { c, h, w }];
        for (idx, layer) in layers.iter().enumerate() {
            let state = *states.last().expect("at least the input state");
            let next = Self::apply_shape(idx, layer, state)?;
            states.push(next);
        }
        Ok(Self {
            name,
            input_shape,
            layers,
            states,
        })
    }

    fn apply_shape(idx: usize, layer: &Layer, state: ShapeState) -> Result<ShapeState, NetworkError> {
        match layer {
            Layer::Dense { weights, bias } => {
                let rows = weights.shape()[0];
                let cols = weights.shape()[1];
                if rows != bias.len() {
                    return Err(NetworkError::DenseBiasMismatch {
                        layer: idx,
                        rows,
                        bias: bias.len(),
                    });
                }
                if cols != state.count() {
                    return Err(NetworkError::ShapeCompose {
                        a: idx.wrapping_sub(1),
                        b: idx,
                        detail: format!(
                            "dense expects {cols} inputs but receives {}",
                            state.count()
                        ),
                    });
                }
                Ok(ShapeState::Flat(rows))
            }
            Layer::Conv2d {
                kernels,
                bias,
                stride,
                padding,
            } => {
                let ShapeState::Spatial { c, h, w } = state else {
                    return Err(NetworkError::ShapeCompose {
                        a: idx.wrapping_sub(1),
                        b: idx,
                        detail: "conv2d needs a spatial input, got a flat vector".into(),
                    });
                };
                if kernels.is_empty() {
                    return Err(NetworkError::BadLayer {
                        layer: idx,
                        detail: "conv2d needs at least one kernel".into(),
                    });
                }
                if kernels.len() != bias.len() {
                    return Err(NetworkError::ConvBiasMismatch {
                        layer: idx,
                        kernels: kernels.len(),
                        bias: bias.len(),
                    });
                }
                if *stride == 0 {
                    return Err(NetworkError::BadLayer {
                        layer: idx,
                        detail: "stride must be at least 1".into(),
                    });
                }
                let kshape = kernels[0].shape().to_vec();
                for k in kernels {
                    if k.rank() != 3 || k.shape() != kshape.as_slice() {
                        return Err(NetworkError::BadLayer {
                            layer: idx,
                            detail: format!(
                                "conv2d kernels must all have shape {kshape:?}, found {:?}",
                                k.shape()
                            ),
                        });
                    }
                }
                let (in_ch, kh, kw) = (kshape[0], kshape[1], kshape[2]);
                if in_ch != c {
                    return Err(NetworkError::ShapeCompose {
                        a: idx.wrapping_sub(1),
                        b: idx,
                        detail: format!("conv2d kernels expect {in_ch} channels, input has {c}"),
                    });
                }
                if kh > h + 2 * padding || kw > w + 2 * padding {
                    return Err(NetworkError::BadLayer {
                        layer: idx,
                        detail: format!(
                            "kernel {kh}x{kw} larger than padded input {h}x{w} (padding {padding})"
                        ),
                    });
                }
                let oh = (h + 2 * padding - kh) / stride + 1;
                let ow = (w + 2 * padding - kw) / stride + 1;
                Ok(ShapeState::Spatial {
                    c: kernels.len(),
                    h: oh,
                    w: ow,
                })
            }
            Layer::Flatten => Ok(ShapeState::Flat(state.count())),
            Layer::Relu => Ok(state),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        self.input_shape
    }

    pub fn input_len(&self) -> usize {
        let (c, h, w) = self.input_shape;
        c * h * w
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Number of classes (rows of the final dense layer).
    pub fn output_len(&self) -> usize {
        self.states.last().expect("validated network").count()
    }

    pub(crate) fn states(&self) -> &[ShapeState] {
        &self.states
    }

    /// Evaluates the network on a flat input of `input_len()` values.
    pub fn forward_flat(&self, x: &[f64]) -> Result<Vec<f64>, NetworkError> {
        if x.len() != self.input_len() {
            return Err(NetworkError::BadInput {
                expected: self.input_len(),
                got: x.len(),
            });
        }
        let mut value = x.to_vec();
        for (idx, layer) in self.layers.iter().enumerate() {
            value = self.apply_layer(idx, layer, value)?;
        }
        Ok(value)
    }

    /// Evaluates the network on a tensor input; rank-1 inputs must match the
    /// flat length, rank-3 inputs must match the input shape exactly.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NetworkError> {
        let (c, h, w) = self.input_shape;
        let ok = match x.shape() {
            [n] => *n == self.input_len(),
            [xc, xh, xw] => (*xc, *xh, *xw) == (c, h, w),
            _ => false,
        };
        if !ok {
            return Err(NetworkError::BadInput {
                expected: self.input_len(),
                got: x.len(),
            });
        }
        let out = self.forward_flat(x.data())?;
        Ok(Tensor::new(vec![out.len()], out)?)
    }

    fn apply_layer(&self, idx: usize, layer: &Layer, value: Vec<f64>) -> Result<Vec<f64>, NetworkError> {
        match layer {
            Layer::Dense { weights, bias } => {
                let cols = weights.shape()[1];
                let wd = weights.data();
                let mut out = bias.clone();
                for (r, o) in out.iter_mut().enumerate() {
                    let row = &wd[r * cols..(r + 1) * cols];
                    *o += row.iter().zip(&value).map(|(&w, &v)| w * v).sum::<f64>();
                }
                Ok(out)
            }
            Layer::Conv2d {
                kernels,
                bias,
                stride,
                padding,
            } => {
                let ShapeState::Spatial { c, h, w } = self.states[idx] else {
                    unreachable!("validated at construction");
                };
                let mut out = Vec::new();
                for (k, &b) in kernels.iter().zip(bias) {
                    let mut acc: Option<Tensor> = None;
                    for ch in 0..c {
                        let plane =
                            Tensor::new(vec![h, w], value[ch * h * w..(ch + 1) * h * w].to_vec())?;
                        let kplane = Tensor::new(
                            vec![k.shape()[1], k.shape()[2]],
                            k.data()[ch * k.shape()[1] * k.shape()[2]
                                ..(ch + 1) * k.shape()[1] * k.shape()[2]]
                                .to_vec(),
                        )?;
                        let conv = convolve2d_strided(&plane, &kplane, *stride, *padding)?;
                        acc = Some(match acc {
                            None => conv,
                            Some(prev) => prev.zip_map(&conv, |x, y| x + y)?,
                        });
                    }
                    let acc = acc.expect("at least one channel");
                    out.extend(acc.data().iter().map(|&v| v + b));
                }
                Ok(out)
            }
            Layer::Flatten => Ok(value),
            Layer::Relu => Ok(value.into_iter().map(|v| v.max(0.0)).collect()),
        }
    }
}

/// Index of the largest logit; ties break towards the smallest index.
pub fn predicted_class(logits: &[f64]) -> usize {
    debug_assert!(!logits.is_empty());
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate().skip(1) {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

/// A network with a prepended affine layer mapping the `m` perturbation
/// variables to the image space: `x0 = A z + B`.
#[derive(Debug, Clone)]
pub struct AugmentedNetwork {
    /// `(input_len, m)` weight matrix, columns are the per-variable images.
    prefix_weights: Tensor,
    prefix_bias: Vec<f64>,
    base: Network,
}

impl AugmentedNetwork {
    pub fn new(
        prefix_weights: Tensor,
        prefix_bias: Vec<f64>,
        base: Network,
    ) -> Result<Self, NetworkError> {
        if prefix_weights.rank() != 2
            || prefix_weights.shape()[0] != base.input_len()
            || prefix_bias.len() != base.input_len()
        {
            return Err(NetworkError::BadInput {
                expected: base.input_len(),
                got: prefix_bias.len(),
            });
        }
        Ok(Self {
            prefix_weights,
            prefix_bias,
            base,
        })
    }

    /// Number of perturbation variables this network takes as input.
    pub fn input_dim(&self) -> usize {
        self.prefix_weights.shape()[1]
    }

    pub fn base(&self) -> &Network {
        &self.base
    }

    pub fn prefix_weights(&self) -> &Tensor {
        &self.prefix_weights
    }

    pub fn prefix_bias(&self) -> &[f64] {
        &self.prefix_bias
    }

    /// The perturbed image `A z + B` for a concrete `z`.
    pub fn perturbed_input(&self, z: &[f64]) -> Result<Vec<f64>, NetworkError> {
        let m = self.input_dim();
        if z.len() != m {
            return Err(NetworkError::BadInput {
                expected: m,
                got: z.len(),
            });
        }
        let wd = self.prefix_weights.data();
        let mut out = self.prefix_bias.clone();
        for (r, o) in out.iter_mut().enumerate() {
            for (col, &zi) in z.iter().enumerate() {
                *o += wd[r * m + col] * zi;
            }
        }
        Ok(out)
    }

    /// Logits of the base network at perturbation `z`.
    pub fn forward(&self, z: &[f64]) -> Result<Vec<f64>, NetworkError> {
        self.base.forward_flat(&self.perturbed_input(z)?)
    }
}

// ---------------------------------------------------------------------------
// On-disk format
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub name: String,
    pub input_shape: [usize; 3],
    pub layers: Vec<LayerFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum LayerFile {
    Dense {
        weights: Vec<Vec<f64>>,
        bias: Vec<f64>,
    },
    Conv2d {
        kernels: Vec<Vec<Vec<Vec<f64>>>>,
        bias: Vec<f64>,
        stride: usize,
        padding: usize,
    },
    Relu,
    Flatten,
}

impl NetworkFile {
    pub fn into_network(self) -> Result<Network, NetworkError> {
        let mut layers = Vec::with_capacity(self.layers.len());
        for (idx, layer) in self.layers.into_iter().enumerate() {
            layers.push(match layer {
                LayerFile::Dense { weights, bias } => {
                    let rows = weights.len();
                    let cols = weights.first().map_or(0, Vec::len);
                    if weights.iter().any(|r| r.len() != cols) {
                        return Err(NetworkError::BadLayer {
                            layer: idx,
                            detail: "dense weight rows have unequal lengths".into(),
                        });
                    }
                    let flat: Vec<f64> = weights.into_iter().flatten().collect();
                    Layer::Dense {
                        weights: Tensor::new(vec![rows, cols], flat)?,
                        bias,
                    }
                }
                LayerFile::Conv2d {
                    kernels,
                    bias,
                    stride,
                    padding,
                } => {
                    let mut ks = Vec::with_capacity(kernels.len());
                    for k in kernels {
                        let in_ch = k.len();
                        let kh = k.first().map_or(0, Vec::len);
                        let kw = k.first().and_then(|p| p.first()).map_or(0, Vec::len);
                        let mut flat = Vec::with_capacity(in_ch * kh * kw);
                        for plane in &k {
                            if plane.len() != kh {
                                return Err(NetworkError::BadLayer {
                                    layer: idx,
                                    detail: "conv2d kernel planes have unequal heights".into(),
                                });
                            }
                            for row in plane {
                                if row.len() != kw {
                                    return Err(NetworkError::BadLayer {
                                        layer: idx,
                                        detail: "conv2d kernel rows have unequal lengths".into(),
                                    });
                                }
                                flat.extend_from_slice(row);
                            }
                        }
                        ks.push(Tensor::new(vec![in_ch, kh, kw], flat)?);
                    }
                    Layer::Conv2d {
                        kernels: ks,
                        bias,
                        stride,
                        padding,
                    }
                }
                LayerFile::Relu => Layer::Relu,
                LayerFile::Flatten => Layer::Flatten,
            });
        }
        Network::new(
            self.name,
            (
                self.input_shape[0],
                self.input_shape[1],
                self.input_shape[2],
            ),
            layers,
        )
    }

    pub fn from_network(net: &Network) -> Self {
        let (c, h, w) = net.input_shape();
        let layers = net
            .layers()
            .iter()
            .map(|layer| match layer {
                Layer::Dense { weights, bias } => {
                    let rows = weights.shape()[0];
                    let cols = weights.shape()[1];
                    LayerFile::Dense {
                        weights: (0..rows)
                            .map(|r| weights.data()[r * cols..(r + 1) * cols].to_vec())
                            .collect(),
                        bias: bias.clone(),
                    }
                }
                Layer::Conv2d {
                    kernels,
                    bias,
                    stride,
                    padding,
                } => LayerFile::Conv2d {
                    kernels: kernels
                        .iter()
                        .map(|k| {
                            let (ic, kh, kw) = (k.shape()[0], k.shape()[1], k.shape()[2]);
                            (0..ic)
                                .map(|ch| {
                                    (0..kh)
                                        .map(|i| {
                                            (0..kw).map(|j| k.at3(ch, i, j)).collect::<Vec<_>>()
                                        })
                                        .collect::<Vec<_>>()
                                })
                                .collect::<Vec<_>>()
                        })
                        .collect(),
                    bias: bias.clone(),
                    stride: *stride,
                    padding: *padding,
                },
                Layer::Relu => LayerFile::Relu,
                Layer::Flatten => LayerFile::Flatten,
            })
            .collect();
        NetworkFile {
            name: net.name().to_string(),
            input_shape: [c, h, w],
            layers,
        }
    }
}

/// Loads and validates a network from its JSON file.
pub fn load_network(path: impl AsRef<Path>) -> Result<Network, NetworkError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| NetworkError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let file: NetworkFile = serde_json::from_str(&text).map_err(|e| NetworkError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    file.into_network()
}

/// Serialises a network to pretty JSON.
pub fn save_network(net: &Network, path: impl AsRef<Path>) -> Result<(), NetworkError> {
    let path = path.as_ref();
    let file = NetworkFile::from_network(net);
    let text = serde_json::to_string_pretty(&file).expect("network serialisation cannot fail");
    fs::write(path, text).map_err(|source| NetworkError::Io {
        path: path.display().to_string(),
        source,
    })
}
