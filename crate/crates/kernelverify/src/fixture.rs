//! Deterministic fixture networks and properties for tests and benchmarks.
//!
//! Two construction modes:
//!
//! * `Random` draws a small dense or convolutional classifier and labels the
//!   image with its own prediction, so the query is always valid.
//! * `FlipAt(z0)` aims the difference of two logits at the perturbed value of
//!   one pixel, so the predicted class changes exactly when the strength
//!   crosses `z0`. Optional hidden neurons form cancelling ReLU pairs: they
//!   leave every concrete output unchanged but widen relaxed bounds, which
//!   forces the verifier to actually split.
//!
//! All randomness comes from a caller-supplied seed; the same seed yields
//! byte-identical files.

use rand::prelude::*;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::encode::{separate_convolution, EncodeError};
use crate::kernel::{KernelError, KernelSpec};
use crate::network::{predicted_class, Layer, Network, NetworkError};
use crate::tensor::{flatten, Tensor, TensorError};
use crate::verify::{KernelSpecFile, PropertyFile};

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("infeasible fixture: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FixtureMode {
    Random,
    /// Class flips exactly when the strength crosses the given value.
    FlipAt(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixtureArch {
    Dense,
    Conv,
}

/// Image content; high contrast blows the baseline's neighbourhood box up to
/// nearly the full unit cube.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageStyle {
    Smooth,
    HighContrast,
}

#[derive(Debug, Clone)]
pub struct FixtureSpec {
    pub name: String,
    pub input_shape: (usize, usize, usize),
    pub hidden: Vec<usize>,
    pub classes: usize,
    pub mode: FixtureMode,
    pub arch: FixtureArch,
    pub image_style: ImageStyle,
    /// Draw the image-facing dense layer from a low-frequency spatial basis
    /// instead of i.i.d. entries. Trained networks have spatially coherent
    /// features, and this is what gives them their characteristic response
    /// to growing blur radii; i.i.d. weights react to kernel size almost
    /// arbitrarily.
    pub smooth_first_layer: bool,
    /// Shrink the logit gap between the predicted class and the runner-up to
    /// this value (random mode). Smaller margins flip at lower perturbation
    /// strengths.
    pub margin: Option<f64>,
    pub kernel: KernelSpec,
    pub strength: f64,
    pub timeout_s: f64,
}

impl FixtureSpec {
    pub fn random(name: &str) -> Self {
        Self {
            name: name.to_string(),
            input_shape: (1, 8, 8),
            hidden: vec![16],
            classes: 3,
            mode: FixtureMode::Random,
            arch: FixtureArch::Dense,
            image_style: ImageStyle::Smooth,
            smooth_first_layer: false,
            margin: None,
            kernel: KernelSpec {
                family: crate::kernel::KernelFamily::BoxBlur,
                size: 3,
            },
            strength: 1.0,
            timeout_s: 60.0,
        }
    }

    pub fn flip(name: &str, z0: f64) -> Self {
        Self {
            mode: FixtureMode::FlipAt(z0),
            hidden: vec![5],
            ..Self::random(name)
        }
    }
}

/// A generated network together with its property file.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub network: Network,
    pub property: PropertyFile,
}

pub fn gen_fixture(seed: u64, spec: &FixtureSpec) -> Result<Fixture, FixtureError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let image = gen_image(&mut rng, spec);
    match spec.mode {
        FixtureMode::Random => gen_random(&mut rng, spec, image),
        FixtureMode::FlipAt(z0) => gen_flip(&mut rng, spec, image, z0),
    }
}

fn gen_image(rng: &mut ChaCha20Rng, spec: &FixtureSpec) -> Tensor {
    let (c, h, w) = spec.input_shape;
    let mut data = Vec::with_capacity(c * h * w);
    for _ in 0..c {
        for i in 0..h {
            for j in 0..w {
                let v = match spec.image_style {
                    ImageStyle::Smooth => {
                        // gentle gradient plus jitter, kept inside [0, 1]
                        let base = 0.25 + 0.5 * (i as f64 / h as f64);
                        (base + 0.2 * (rng.gen::<f64>() - 0.5)).clamp(0.0, 1.0)
                    }
                    ImageStyle::HighContrast => {
                        let on = (i + j) % 2 == 0;
                        let jitter = 0.05 * rng.gen::<f64>();
                        if on {
                            0.95 - jitter
                        } else {
                            0.05 + jitter
                        }
                    }
                };
                data.push(v);
            }
        }
    }
    Tensor::new(vec![c, h, w], data).expect("generated image is finite")
}

fn dense_layer(rng: &mut ChaCha20Rng, rows: usize, cols: usize) -> Layer {
    let scale = 1.5 / (cols as f64).sqrt();
    let weights: Vec<f64> = (0..rows * cols)
        .map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * scale)
        .collect();
    let bias: Vec<f64> = (0..rows).map(|_| (rng.gen::<f64>() - 0.5) * 0.2).collect();
    Layer::Dense {
        weights: Tensor::new(vec![rows, cols], weights).expect("finite weights"),
        bias,
    }
}

/// Dense layer over a spatial input whose rows are random low-frequency
/// patterns (constant, two gradients, saddle, curvature), with a per-channel
/// gain.
fn smooth_dense_layer(
    rng: &mut ChaCha20Rng,
    rows: usize,
    shape: (usize, usize, usize),
) -> Layer {
    let (c, h, w) = shape;
    let n = c * h * w;
    let scale = 3.0 / n as f64;
    let mut weights = Vec::with_capacity(rows * n);
    for _ in 0..rows {
        let coef: Vec<f64> = (0..5).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let gains: Vec<f64> = (0..c).map(|_| 0.5 + rng.gen::<f64>()).collect();
        for gain in &gains {
            for i in 0..h {
                for j in 0..w {
                    let u = i as f64 / (h - 1).max(1) as f64 - 0.5;
                    let v = j as f64 / (w - 1).max(1) as f64 - 0.5;
                    let pattern = coef[0]
                        + coef[1] * u
                        + coef[2] * v
                        + coef[3] * u * v
                        + coef[4] * (u * u - v * v);
                    weights.push(scale * gain * pattern);
                }
            }
        }
    }
    let bias: Vec<f64> = (0..rows).map(|_| (rng.gen::<f64>() - 0.5) * 0.1).collect();
    Layer::Dense {
        weights: Tensor::new(vec![rows, n], weights).expect("finite weights"),
        bias,
    }
}

fn gen_random(
    rng: &mut ChaCha20Rng,
    spec: &FixtureSpec,
    image: Tensor,
) -> Result<Fixture, FixtureError> {
    let (c, h, w) = spec.input_shape;
    let mut layers = Vec::new();
    let mut current = c * h * w;
    match spec.arch {
        FixtureArch::Dense => {
            for (depth, &width) in spec.hidden.iter().enumerate() {
                if depth == 0 && spec.smooth_first_layer {
                    layers.push(smooth_dense_layer(rng, width, (c, h, w)));
                } else {
                    layers.push(dense_layer(rng, width, current));
                }
                layers.push(Layer::Relu);
                current = width;
            }
        }
        FixtureArch::Conv => {
            let out_ch = 2;
            let kernels = (0..out_ch)
                .map(|_| {
                    Tensor::new(
                        vec![c, 3, 3],
                        (0..c * 9)
                            .map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * 0.4)
                            .collect(),
                    )
                    .expect("finite kernels")
                })
                .collect();
            layers.push(Layer::Conv2d {
                kernels,
                bias: (0..out_ch).map(|_| (rng.gen::<f64>() - 0.5) * 0.2).collect(),
                stride: 1,
                padding: 1,
            });
            layers.push(Layer::Relu);
            layers.push(Layer::Flatten);
            current = out_ch * h * w;
        }
    }
    let readout_shape = match spec.arch {
        FixtureArch::Conv => Some((2, h, w)),
        FixtureArch::Dense if spec.hidden.is_empty() => Some((c, h, w)),
        FixtureArch::Dense => None,
    };
    match readout_shape {
        Some(shape) if spec.smooth_first_layer => {
            layers.push(smooth_dense_layer(rng, spec.classes, shape))
        }
        _ => layers.push(dense_layer(rng, spec.classes, current)),
    }
    let mut network = Network::new(spec.name.clone(), spec.input_shape, layers)?;
    let logits = network.forward_flat(flatten(&image).data())?;
    let label = predicted_class(&logits);

    if let Some(target) = spec.margin {
        network = with_margin(network, &logits, label, target)?;
    }
    Ok(Fixture {
        property: property_for(spec, &image, label),
        network,
    })
}

/// Lifts the runner-up logit's bias so that its gap to the predicted class
/// becomes exactly `target` (only ever shrinking the gap).
fn with_margin(
    network: Network,
    logits: &[f64],
    label: usize,
    target: f64,
) -> Result<Network, FixtureError> {
    let runner = logits
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label)
        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite logits"))
        .map(|(i, _)| i)
        .expect("at least two classes");
    let gap = logits[label] - logits[runner];
    if target <= 0.0 || target >= gap {
        return Ok(network);
    }
    let name = network.name().to_string();
    let input_shape = network.input_shape();
    let mut layers = network.layers().to_vec();
    if let Some(Layer::Dense { bias, .. }) = layers.last_mut() {
        bias[runner] += gap - target;
    }
    Ok(Network::new(name, input_shape, layers)?)
}

fn gen_flip(
    rng: &mut ChaCha20Rng,
    spec: &FixtureSpec,
    mut image: Tensor,
    z0: f64,
) -> Result<Fixture, FixtureError> {
    if !(0.0..=1.0).contains(&z0) {
        return Err(FixtureError::Infeasible(format!(
            "flip point {z0} outside [0, 1]"
        )));
    }
    let (c, h, w) = spec.input_shape;
    let n = c * h * w;
    // a bright pixel on a dark background gives the perturbed value a steep
    // slope in z for every blur family (and a rising one for sharpen)
    let target = (h / 2) * w + w / 2;
    let mut data = image.data().to_vec();
    for (i, v) in data.iter_mut().enumerate().take(h * w) {
        *v = if i == target {
            0.9
        } else {
            0.1 + 0.05 * rng.gen::<f64>()
        };
    }
    image = Tensor::new(vec![c, h, w], data)?;

    let kernel = spec.kernel.build(true)?;
    let encoded = separate_convolution(&image, &kernel)?;
    let slope = encoded.coeff_columns()[0][target];
    let intercept = encoded.bias()[target];
    if slope.abs() < 1e-9 {
        return Err(FixtureError::Infeasible(
            "kernel leaves the target pixel unchanged; no flip possible".into(),
        ));
    }
    // orient the signal so class 0 wins exactly for z <= z0
    let orient = if slope < 0.0 { 1.0 } else { -1.0 };

    let pairs = spec.hidden.first().map_or(0, |&width| width.saturating_sub(1) / 2);
    let hidden = 1 + 2 * pairs;

    // hidden layer: a always-active signal neuron plus cancelling noise pairs
    let signal_min = (orient * intercept).min(orient * (slope + intercept));
    let lift = 0.05 - signal_min;
    let mut rows = Vec::with_capacity(hidden);
    let mut biases = Vec::with_capacity(hidden);
    let mut signal_row = vec![0.0; n];
    signal_row[target] = orient;
    rows.push(signal_row);
    biases.push(lift);
    for pair in 0..pairs {
        let mut pick = rng.gen_range(0..n);
        if pick == target {
            pick = (pick + 1) % n;
        }
        let gain = 0.5 + 0.5 * rng.gen::<f64>();
        let pivot = 0.2 + 0.6 * (pair as f64 + rng.gen::<f64>()) / pairs.max(1) as f64;
        let a_q = encoded.coeff_columns()[0][pick];
        let b_q = encoded.bias()[pick];
        // pre-activation gain * (a_q (z - pivot)) changes sign at z = pivot
        let mut row = vec![0.0; n];
        row[pick] = gain;
        let bias = -gain * (a_q * pivot + b_q);
        rows.push(row.clone());
        biases.push(bias);
        rows.push(row);
        biases.push(bias);
    }

    let first = Layer::Dense {
        weights: Tensor::from_rows(&rows)?,
        bias: biases,
    };

    // logits: y0 recovers the signal exactly (noise pairs cancel), y1 is the
    // signal's value at z0, further classes sit strictly below
    let mut out_rows = vec![vec![0.0; hidden]; spec.classes];
    out_rows[0][0] = 1.0;
    for pair in 0..pairs {
        let weight = 0.2 + 0.1 * pair as f64;
        out_rows[0][1 + 2 * pair] = weight;
        out_rows[0][2 + 2 * pair] = -weight;
    }
    let mut out_bias = vec![0.0; spec.classes];
    out_bias[0] = -lift;
    out_bias[1] = orient * (slope * z0 + intercept);
    for b in out_bias.iter_mut().skip(2) {
        *b = orient * (slope * z0 + intercept) - 1.0;
    }
    let second = Layer::Dense {
        weights: Tensor::from_rows(&out_rows)?,
        bias: out_bias,
    };

    let network = Network::new(
        spec.name.clone(),
        spec.input_shape,
        vec![first, Layer::Relu, second],
    )?;
    let logits = network.forward_flat(flatten(&image).data())?;
    if predicted_class(&logits) != 0 {
        return Err(FixtureError::Infeasible(format!(
            "flip construction misclassifies its own base image (logits {logits:?})"
        )));
    }
    Ok(Fixture {
        property: property_for(spec, &image, 0),
        network,
    })
}

fn property_for(spec: &FixtureSpec, image: &Tensor, label: usize) -> PropertyFile {
    let (c, h, w) = spec.input_shape;
    PropertyFile {
        image: image.data().to_vec(),
        image_shape: [c, h, w],
        label,
        kernel: KernelSpecFile::from_spec(&spec.kernel),
        strength: [0.0, spec.strength],
        timeout_s: spec.timeout_s,
    }
}
