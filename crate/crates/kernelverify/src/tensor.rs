//! Shape-checked dense tensors and 2-D cross-correlation.
//!
//! Tensors are rank 1-3, row-major, channel-major for rank 3, and hold
//! finite 64-bit floats. `convolve2d` follows the machine-learning convention
//! (no kernel flip) and is the single convolution routine every other module
//! builds on.

use thiserror::Error;

/// Errors raised by tensor construction and tensor operations.
#[derive(Debug, Error, PartialEq)]
pub enum TensorError {
    #[error("shape {shape:?} implies {expected} elements but {actual} were provided")]
    ElementCount {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("tensor rank {0} unsupported (expected rank 1-3)")]
    Rank(usize),
    #[error("tensor data contains a non-finite value at index {0}")]
    NonFinite(usize),
    #[error("shape extents must be positive, got {0:?}")]
    ZeroExtent(Vec<usize>),
    #[error("kernel shape {kernel:?} is not square")]
    KernelNotSquare { kernel: Vec<usize> },
    #[error("kernel {kernel:?} does not fit input {input:?} with padding {padding:?}")]
    KernelTooLarge {
        input: Vec<usize>,
        kernel: Vec<usize>,
        padding: Padding,
    },
    #[error("cannot reshape {from:?} ({from_len} elements) to {to:?} ({to_len} elements)")]
    ReshapeMismatch {
        from: Vec<usize>,
        from_len: usize,
        to: Vec<usize>,
        to_len: usize,
    },
    #[error("expected rank-{expected} tensor, got shape {shape:?}")]
    WrongRank { expected: usize, shape: Vec<usize> },
}

/// Zero-padding scheme for `convolve2d`.
///
/// `ZeroSame` pads with zeros so that an odd-size kernel preserves the
/// spatial shape exactly. Even kernel sizes pad asymmetrically
/// (floor((s-1)/2) before, the rest after) so the output shape still matches
/// the input; odd sizes are unaffected by this rule since both sides equal
/// floor(s/2).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    None,
    ZeroSame,
}

impl Padding {
    /// (before, after) padding applied to each spatial axis for kernel side `s`.
    pub fn amounts(self, s: usize) -> (usize, usize) {
        match self {
            Padding::None => (0, 0),
            Padding::ZeroSame => {
                let before = (s - 1) / 2;
                (before, s - 1 - before)
            }
        }
    }
}

/// Dense multi-dimensional array of finite `f64`s, rank 1-3.
///
/// Rank-3 layout is `(channels, height, width)` with the last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, validating rank, element count and finiteness.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        if shape.is_empty() || shape.len() > 3 {
            return Err(TensorError::Rank(shape.len()));
        }
        if shape.iter().any(|&e| e == 0) {
            return Err(TensorError::ZeroExtent(shape));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::ElementCount {
                shape,
                expected,
                actual: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite(i));
        }
        Ok(Self { shape, data })
    }

    /// All-zero tensor of the given shape.
    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self::new(shape, vec![0.0; n]).expect("zero tensor is always valid")
    }

    /// Rank-2 tensor from nested rows; all rows must share a length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, TensorError> {
        let h = rows.len();
        let w = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(h * w);
        for row in rows {
            if row.len() != w {
                return Err(TensorError::ElementCount {
                    shape: vec![h, w],
                    expected: h * w,
                    actual: rows.iter().map(Vec::len).sum(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(vec![h, w], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Rank-2 element access.
    pub fn at2(&self, i: usize, j: usize) -> f64 {
        debug_assert_eq!(self.rank(), 2);
        self.data[i * self.shape[1] + j]
    }

    /// Rank-3 element access, `(channel, row, col)`.
    pub fn at3(&self, c: usize, i: usize, j: usize) -> f64 {
        debug_assert_eq!(self.rank(), 3);
        self.data[(c * self.shape[1] + i) * self.shape[2] + j]
    }

    /// Spatial extents `(height, width)`; a rank-2 tensor is one channel.
    pub fn spatial(&self) -> Result<(usize, usize), TensorError> {
        match self.shape.as_slice() {
            [h, w] => Ok((*h, *w)),
            [_, h, w] => Ok((*h, *w)),
            other => Err(TensorError::WrongRank {
                expected: 2,
                shape: other.to_vec(),
            }),
        }
    }

    /// Number of channels (1 for rank-2).
    pub fn channels(&self) -> usize {
        if self.rank() == 3 {
            self.shape[0]
        } else {
            1
        }
    }

    /// Elementwise map; the result must stay finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self, TensorError> {
        Self::new(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    /// Elementwise combination of two same-shape tensors.
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self, TensorError> {
        if self.shape != other.shape {
            return Err(TensorError::ReshapeMismatch {
                from: self.shape.clone(),
                from_len: self.len(),
                to: other.shape.clone(),
                to_len: other.len(),
            });
        }
        Self::new(
            self.shape.clone(),
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    /// Sum of all entries.
    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

/// Flattens a tensor to rank 1, channel-major then row-major.
pub fn flatten(t: &Tensor) -> Tensor {
    Tensor::new(vec![t.len()], t.data().to_vec()).expect("flatten preserves validity")
}

/// Reinterprets a tensor's data under a new shape with the same element count.
pub fn reshape(t: &Tensor, shape: Vec<usize>) -> Result<Tensor, TensorError> {
    let to_len: usize = shape.iter().product();
    if to_len != t.len() {
        return Err(TensorError::ReshapeMismatch {
            from: t.shape().to_vec(),
            from_len: t.len(),
            to: shape,
            to_len,
        });
    }
    Tensor::new(shape, t.data().to_vec())
}

/// The `s`-by-`s` identity kernel (single 1 at the center); `s` must be odd.
pub fn identity_kernel(s: usize) -> Tensor {
    debug_assert!(s % 2 == 1, "identity kernel needs an odd size");
    let mut data = vec![0.0; s * s];
    let c = s / 2;
    data[c * s + c] = 1.0;
    Tensor::new(vec![s, s], data).expect("identity kernel is valid")
}

/// 2-D cross-correlation of `input` (rank 2 or 3) with a square rank-2
/// `kernel`: `out[i,j] = sum_{k,l} in[i+k-pad, j+l-pad] * kernel[k,l]`.
///
/// Rank-3 inputs convolve each channel independently with the same kernel,
/// so the channel count is preserved. Out-of-image cells contribute zero
/// under `Padding::ZeroSame` and are never addressed under `Padding::None`.
pub fn convolve2d(input: &Tensor, kernel: &Tensor, padding: Padding) -> Result<Tensor, TensorError> {
    if kernel.rank() != 2 {
        return Err(TensorError::WrongRank {
            expected: 2,
            shape: kernel.shape().to_vec(),
        });
    }
    let s = kernel.shape()[0];
    if kernel.shape()[1] != s {
        return Err(TensorError::KernelNotSquare {
            kernel: kernel.shape().to_vec(),
        });
    }
    if input.rank() < 2 {
        return Err(TensorError::WrongRank {
            expected: 2,
            shape: input.shape().to_vec(),
        });
    }
    let (h, w) = input.spatial()?;
    let (pad_before, pad_after) = padding.amounts(s);
    let span = pad_before + pad_after + 1;
    if s > h.min(w) + span - 1 {
        return Err(TensorError::KernelTooLarge {
            input: input.shape().to_vec(),
            kernel: kernel.shape().to_vec(),
            padding,
        });
    }
    let out_h = h + pad_before + pad_after + 1 - s;
    let out_w = w + pad_before + pad_after + 1 - s;
    let channels = input.channels();

    let mut out = vec![0.0; channels * out_h * out_w];
    for c in 0..channels {
        let plane = &input.data()[c * h * w..(c + 1) * h * w];
        for i in 0..out_h {
            for j in 0..out_w {
                let mut acc = 0.0;
                for k in 0..s {
                    let Some(r) = (i + k).checked_sub(pad_before) else {
                        continue;
                    };
                    if r >= h {
                        continue;
                    }
                    for l in 0..s {
                        let Some(q) = (j + l).checked_sub(pad_before) else {
                            continue;
                        };
                        if q >= w {
                            continue;
                        }
                        acc += plane[r * w + q] * kernel.at2(k, l);
                    }
                }
                out[(c * out_h + i) * out_w + j] = acc;
            }
        }
    }
    if input.rank() == 2 {
        Tensor::new(vec![out_h, out_w], out)
    } else {
        Tensor::new(vec![channels, out_h, out_w], out)
    }
}

/// Strided single-channel correlation with explicit symmetric zero padding.
/// Used by conv2d network layers; `convolve2d` is the stride-1 case with
/// derived padding.
pub fn convolve2d_strided(
    plane: &Tensor,
    kernel: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<Tensor, TensorError> {
    if plane.rank() != 2 {
        return Err(TensorError::WrongRank {
            expected: 2,
            shape: plane.shape().to_vec(),
        });
    }
    if kernel.rank() != 2 {
        return Err(TensorError::WrongRank {
            expected: 2,
            shape: kernel.shape().to_vec(),
        });
    }
    let (h, w) = plane.spatial()?;
    let (kh, kw) = kernel.spatial()?;
    if kh > h + 2 * pad || kw > w + 2 * pad {
        return Err(TensorError::KernelTooLarge {
            input: plane.shape().to_vec(),
            kernel: kernel.shape().to_vec(),
            padding: Padding::None,
        });
    }
    debug_assert!(stride >= 1);
    let out_h = (h + 2 * pad - kh) / stride + 1;
    let out_w = (w + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; out_h * out_w];
    for i in 0..out_h {
        for j in 0..out_w {
            let mut acc = 0.0;
            for k in 0..kh {
                let Some(r) = (i * stride + k).checked_sub(pad) else {
                    continue;
                };
                if r >= h {
                    continue;
                }
                for l in 0..kw {
                    let Some(q) = (j * stride + l).checked_sub(pad) else {
                        continue;
                    };
                    if q >= w {
                        continue;
                    }
                    acc += plane.at2(r, q) * kernel.at2(k, l);
                }
            }
            out[i * out_w + j] = acc;
        }
    }
    Tensor::new(vec![out_h, out_w], out)
}
