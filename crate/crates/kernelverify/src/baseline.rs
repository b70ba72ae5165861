//! Per-pixel neighbourhood bounds, the prior method this engine is compared
//! against.
//!
//! Each pixel is bounded by the minimum and maximum value inside the `k x k`
//! box centred on it, with out-of-image cells disregarded (no zero padding).
//! The bounds are attainable: a 0/1 kernel with its single 1 at the
//! extremum's offset reproduces the bound exactly, which is what makes the
//! box sound for *any* convolution kernel with entries in [0, 1]. The price
//! is that every pixel varies independently, so the resulting verification
//! problem is as high-dimensional as the image.

use thiserror::Error;

use crate::tensor::{Tensor, TensorError};

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("neighbourhood size must be odd, got {0}")]
    EvenK(usize),
    #[error("neighbourhood size must be at least 3, got {0}")]
    KTooSmall(usize),
    #[error("image must be rank-3 (channels, height, width), got shape {0:?}")]
    ImageRank(Vec<usize>),
    #[error("position ({0}, {1}, {2}) outside the image")]
    PositionOutOfRange(usize, usize, usize),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Image-shaped per-pixel lower and upper bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelBox {
    lower: Tensor,
    upper: Tensor,
}

impl PixelBox {
    pub fn lower(&self) -> &Tensor {
        &self.lower
    }

    pub fn upper(&self) -> &Tensor {
        &self.upper
    }
}

/// Which end of the neighbourhood range a kernel should attain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extremum {
    Min,
    Max,
}

fn check_inputs(image: &Tensor, k: usize) -> Result<(), BaselineError> {
    if image.rank() != 3 {
        return Err(BaselineError::ImageRank(image.shape().to_vec()));
    }
    if k % 2 == 0 {
        return Err(BaselineError::EvenK(k));
    }
    if k < 3 {
        return Err(BaselineError::KTooSmall(k));
    }
    Ok(())
}

/// Per-channel window clipped to the image, as half-open row/col ranges.
fn window(i: usize, j: usize, h: usize, w: usize, r: usize) -> (usize, usize, usize, usize) {
    let r0 = i.saturating_sub(r);
    let r1 = (i + r + 1).min(h);
    let c0 = j.saturating_sub(r);
    let c1 = (j + r + 1).min(w);
    (r0, r1, c0, c1)
}

/// Min/max of each pixel's `k x k` neighbourhood, computed per channel.
pub fn neighborhood_bounds(image: &Tensor, k: usize) -> Result<PixelBox, BaselineError> {
    check_inputs(image, k)?;
    let (c, h, w) = (image.channels(), image.shape()[1], image.shape()[2]);
    let r = k / 2;
    let mut lower = vec![0.0; c * h * w];
    let mut upper = vec![0.0; c * h * w];
    for ch in 0..c {
        for i in 0..h {
            for j in 0..w {
                let (r0, r1, c0, c1) = window(i, j, h, w, r);
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for row in r0..r1 {
                    for col in c0..c1 {
                        let v = image.at3(ch, row, col);
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                }
                lower[(ch * h + i) * w + j] = lo;
                upper[(ch * h + i) * w + j] = hi;
            }
        }
    }
    Ok(PixelBox {
        lower: Tensor::new(image.shape().to_vec(), lower)?,
        upper: Tensor::new(image.shape().to_vec(), upper)?,
    })
}

/// The 0/1 kernel realising a pixel's bound: a single 1 at the offset of the
/// neighbourhood extremum (first occurrence in row-major order).
pub fn attainability_kernel(
    image: &Tensor,
    k: usize,
    position: (usize, usize, usize),
    which: Extremum,
) -> Result<Tensor, BaselineError> {
    check_inputs(image, k)?;
    let (c, h, w) = (image.channels(), image.shape()[1], image.shape()[2]);
    let (ch, i, j) = position;
    if ch >= c || i >= h || j >= w {
        return Err(BaselineError::PositionOutOfRange(ch, i, j));
    }
    let r = k / 2;
    let (r0, r1, c0, c1) = window(i, j, h, w, r);
    let mut best: Option<(f64, usize, usize)> = None;
    for row in r0..r1 {
        for col in c0..c1 {
            let v = image.at3(ch, row, col);
            let better = match (&best, which) {
                (None, _) => true,
                (Some((b, _, _)), Extremum::Min) => v < *b,
                (Some((b, _, _)), Extremum::Max) => v > *b,
            };
            if better {
                best = Some((v, row, col));
            }
        }
    }
    let (_, row, col) = best.expect("window is never empty");
    let mut data = vec![0.0; k * k];
    // kernel index = extremum offset from the window center, shifted by r
    data[(row + r - i) * k + (col + r - j)] = 1.0;
    Ok(Tensor::new(vec![k, k], data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{convolve2d, Padding};

    fn image3x3() -> Tensor {
        Tensor::new(vec![1, 3, 3], (1..=9).map(f64::from).collect()).unwrap()
    }

    #[test]
    fn constant_image_collapses_to_itself() {
        let image = Tensor::new(vec![2, 3, 3], vec![0.7; 18]).unwrap();
        let pb = neighborhood_bounds(&image, 3).unwrap();
        assert_eq!(pb.lower(), &image);
        assert_eq!(pb.upper(), &image);
    }

    #[test]
    fn hand_computed_3x3_neighbourhoods() {
        let pb = neighborhood_bounds(&image3x3(), 3).unwrap();
        // center sees the whole image
        assert_eq!(pb.lower().at3(0, 1, 1), 1.0);
        assert_eq!(pb.upper().at3(0, 1, 1), 9.0);
        // corner (0,0) sees {1, 2, 4, 5}
        assert_eq!(pb.lower().at3(0, 0, 0), 1.0);
        assert_eq!(pb.upper().at3(0, 0, 0), 5.0);
    }

    #[test]
    fn saturating_k_gives_global_extrema_everywhere() {
        let image = image3x3();
        let pb = neighborhood_bounds(&image, 5).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(pb.lower().at3(0, i, j), 1.0);
                assert_eq!(pb.upper().at3(0, i, j), 9.0);
            }
        }
    }

    #[test]
    fn even_k_rejected() {
        assert_eq!(
            neighborhood_bounds(&image3x3(), 4).unwrap_err(),
            BaselineError::EvenK(4)
        );
        assert_eq!(
            neighborhood_bounds(&image3x3(), 1).unwrap_err(),
            BaselineError::KTooSmall(1)
        );
    }

    #[test]
    fn per_channel_bounds_do_not_mix() {
        let mut data = vec![0.0; 8];
        data[4..].fill(10.0);
        let image = Tensor::new(vec![2, 2, 2], data).unwrap();
        let pb = neighborhood_bounds(&image, 3).unwrap();
        assert_eq!(pb.upper().at3(0, 0, 0), 0.0);
        assert_eq!(pb.lower().at3(1, 0, 0), 10.0);
    }

    #[test]
    fn attainability_kernel_reproduces_bounds_exactly() {
        let image = image3x3();
        let plane = Tensor::new(vec![3, 3], image.data().to_vec()).unwrap();
        let pb = neighborhood_bounds(&image, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                for which in [Extremum::Min, Extremum::Max] {
                    let kernel = attainability_kernel(&image, 3, (0, i, j), which).unwrap();
                    assert_eq!(kernel.data().iter().sum::<f64>(), 1.0);
                    let conv = convolve2d(&plane, &kernel, Padding::ZeroSame).unwrap();
                    let expected = match which {
                        Extremum::Min => pb.lower().at3(0, i, j),
                        Extremum::Max => pb.upper().at3(0, i, j),
                    };
                    assert_eq!(conv.at2(i, j), expected, "pixel ({i},{j}) {which:?}");
                }
            }
        }
    }

    #[test]
    fn corner_min_kernel_points_at_value_one() {
        let kernel = attainability_kernel(&image3x3(), 3, (0, 0, 0), Extremum::Min).unwrap();
        // value 1 sits at the window center (offset 0, 0) for the corner pixel
        assert_eq!(kernel.at2(1, 1), 1.0);
    }

    #[test]
    fn constant_image_any_single_one_kernel_attains() {
        let image = Tensor::new(vec![1, 2, 2], vec![0.5; 4]).unwrap();
        let kernel = attainability_kernel(&image, 3, (0, 1, 1), Extremum::Max).unwrap();
        assert_eq!(kernel.data().iter().filter(|&&v| v == 1.0).count(), 1);
        let plane = Tensor::new(vec![2, 2], image.data().to_vec()).unwrap();
        let conv = convolve2d(&plane, &kernel, Padding::ZeroSame).unwrap();
        assert_eq!(conv.at2(1, 1), 0.5);
    }

    #[test]
    fn out_of_range_position_rejected() {
        assert_eq!(
            attainability_kernel(&image3x3(), 3, (0, 3, 0), Extremum::Min).unwrap_err(),
            BaselineError::PositionOutOfRange(0, 3, 0)
        );
    }
}
