//! Separated convolution of an image with a parameterised kernel, and the
//! affine layer that prepends the result to a network.
//!
//! Because convolution is linear, `I * (sum_i A_i z_i + B)` equals
//! `sum_i (I * A_i) z_i + I * B`, so the perturbed image is affine in the
//! strength variables. The flattened convolutions become the weight columns
//! and bias of a dense layer whose input is `z` itself, shrinking the
//! verification input from one dimension per pixel to `m` dimensions.

use thiserror::Error;

use crate::kernel::ParamKernel;
use crate::network::{AugmentedNetwork, Network, NetworkError};
use crate::tensor::{convolve2d, flatten, Padding, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("image must be rank-3 (channels, height, width), got shape {0:?}")]
    ImageRank(Vec<usize>),
    #[error("encoded image has {encoded} pixels but the network expects {expected}")]
    NetworkMismatch { encoded: usize, expected: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// The image-specific affine map `z -> A z + B` produced by separated
/// convolution: one flat coefficient vector per variable plus a flat bias.
#[derive(Debug, Clone)]
pub struct EncodedPerturbation {
    coeff_columns: Vec<Vec<f64>>,
    bias: Vec<f64>,
    image: Tensor,
    kernel: ParamKernel,
}

impl EncodedPerturbation {
    /// Per-variable flattened convolutions `I * A_i`.
    pub fn coeff_columns(&self) -> &[Vec<f64>] {
        &self.coeff_columns
    }

    /// Flattened convolution `I * B`.
    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn num_vars(&self) -> usize {
        self.coeff_columns.len()
    }

    pub fn image(&self) -> &Tensor {
        &self.image
    }

    pub fn kernel(&self) -> &ParamKernel {
        &self.kernel
    }

    /// The perturbed image at a concrete `z`, as a flat vector.
    pub fn perturbed_at(&self, z: &[f64]) -> Vec<f64> {
        debug_assert_eq!(z.len(), self.num_vars());
        let mut out = self.bias.clone();
        for (col, &zi) in self.coeff_columns.iter().zip(z) {
            for (o, &c) in out.iter_mut().zip(col) {
                *o += c * zi;
            }
        }
        out
    }
}

/// Convolves `image` with each coefficient matrix and the bias matrix of the
/// kernel under zero-same padding, each channel independently.
pub fn separate_convolution(
    image: &Tensor,
    kernel: &ParamKernel,
) -> Result<EncodedPerturbation, EncodeError> {
    if image.rank() != 3 {
        return Err(EncodeError::ImageRank(image.shape().to_vec()));
    }
    let mut coeff_columns = Vec::with_capacity(kernel.num_vars());
    for a in kernel.coeffs() {
        let conv = convolve2d(image, a, Padding::ZeroSame)?;
        coeff_columns.push(flatten(&conv).data().to_vec());
    }
    let bias = flatten(&convolve2d(image, kernel.bias(), Padding::ZeroSame)?)
        .data()
        .to_vec();
    debug_assert!(coeff_columns.iter().all(|c| c.len() == bias.len()));
    Ok(EncodedPerturbation {
        coeff_columns,
        bias,
        image: image.clone(),
        kernel: kernel.clone(),
    })
}

/// Prepends the encoded perturbation to `net` as a dense layer with weight
/// columns `I * A_i` and bias `I * B`; the augmented input is `z`.
pub fn build_augmented(
    net: &Network,
    encoded: &EncodedPerturbation,
) -> Result<AugmentedNetwork, EncodeError> {
    let n = encoded.bias().len();
    if n != net.input_len() {
        return Err(EncodeError::NetworkMismatch {
            encoded: n,
            expected: net.input_len(),
        });
    }
    let m = encoded.num_vars();
    let mut weights = vec![0.0; n * m];
    for (col, column) in encoded.coeff_columns().iter().enumerate() {
        for (row, &v) in column.iter().enumerate() {
            weights[row * m + col] = v;
        }
    }
    let weights = Tensor::new(vec![n, m], weights)?;
    Ok(AugmentedNetwork::new(
        weights,
        encoded.bias().to_vec(),
        net.clone(),
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{box_blur_param, motion_blur_param, BlurAngle, KernelFamily, Parity};
    use crate::network::Layer;
    use rand::prelude::*;
    use rand_chacha::ChaCha20Rng;

    fn random_image(rng: &mut ChaCha20Rng, c: usize, h: usize, w: usize) -> Tensor {
        let data: Vec<f64> = (0..c * h * w).map(|_| rng.gen::<f64>()).collect();
        Tensor::new(vec![c, h, w], data).unwrap()
    }

    #[test]
    fn identity_bias_reproduces_the_image_for_odd_kernels() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let image = random_image(&mut rng, 2, 5, 5);
        for kernel in [
            box_blur_param(3).unwrap(),
            motion_blur_param(5, BlurAngle::Deg45).unwrap(),
        ] {
            let enc = separate_convolution(&image, &kernel).unwrap();
            assert_eq!(enc.bias(), flatten(&image).data());
        }
    }

    #[test]
    fn box_blur_coefficients_on_tiny_all_ones_image() {
        // Each 3x3 window over a 1x2x2 all-ones image sees three ones of 1/9
        // plus the center -8/9, so every coefficient is -5/9.
        let image = Tensor::new(vec![1, 2, 2], vec![1.0; 4]).unwrap();
        let enc = separate_convolution(&image, &box_blur_param(3).unwrap()).unwrap();
        for &v in &enc.coeff_columns()[0] {
            assert!((v - (-5.0 / 9.0)).abs() < 1e-15, "got {v}");
        }
    }

    #[test]
    fn separated_path_matches_direct_convolution() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let image = random_image(&mut rng, 1, 4, 4);
        for kernel in [
            box_blur_param(3).unwrap(),
            sharpen(),
            motion_blur_param(3, BlurAngle::Deg135).unwrap(),
        ] {
            let enc = separate_convolution(&image, &kernel).unwrap();
            for _ in 0..100 {
                let z = rng.gen::<f64>();
                let direct = flatten(
                    &convolve2d(&image, &kernel.evaluate(&[z]).unwrap(), Padding::ZeroSame)
                        .unwrap(),
                );
                let separated = enc.perturbed_at(&[z]);
                for (&d, &s) in direct.data().iter().zip(&separated) {
                    assert!((d - s).abs() <= 1e-12);
                }
            }
        }
    }

    fn sharpen() -> ParamKernel {
        crate::kernel::sharpen_param(3).unwrap()
    }

    fn tiny_net(n: usize, seed: u64) -> Network {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..n).map(|_| rng.gen::<f64>() - 0.5).collect())
            .collect();
        Network::new(
            "tiny".into(),
            (1, 2, 2),
            vec![Layer::Dense {
                weights: Tensor::from_rows(&rows).unwrap(),
                bias: vec![0.0; 3],
            }],
        )
        .unwrap()
    }

    #[test]
    fn augmented_endpoints_match_plain_forward() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let image = random_image(&mut rng, 1, 2, 2);
        let net = tiny_net(4, 11);
        let kernel = box_blur_param(3).unwrap();
        let enc = separate_convolution(&image, &kernel).unwrap();
        let aug = build_augmented(&net, &enc).unwrap();

        // z = 0 is the identity perturbation for odd sizes.
        let at0 = aug.forward(&[0.0]).unwrap();
        let plain = net.forward_flat(flatten(&image).data()).unwrap();
        for (a, b) in at0.iter().zip(&plain) {
            assert!((a - b).abs() <= 1e-12);
        }

        let at1 = aug.forward(&[1.0]).unwrap();
        let blurred = flatten(
            &convolve2d(&image, &kernel.evaluate(&[1.0]).unwrap(), Padding::ZeroSame).unwrap(),
        );
        let direct = net.forward_flat(blurred.data()).unwrap();
        for (a, b) in at1.iter().zip(&direct) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn synthetic_two_variable_kernel_matches_direct_path() {
        // Two random zero-sum coefficient matrices over the identity bias.
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mut make_coeff = |s: usize| {
            let mut data: Vec<f64> = (0..s * s).map(|_| rng.gen::<f64>() - 0.5).collect();
            let mean = data.iter().sum::<f64>() / (s * s) as f64;
            for v in &mut data {
                *v -= mean;
            }
            Tensor::new(vec![s, s], data).unwrap()
        };
        let kernel = ParamKernel::from_parts(
            3,
            KernelFamily::BoxBlur,
            Parity::Odd,
            vec![make_coeff(3), make_coeff(3)],
            crate::tensor::identity_kernel(3),
            None,
        )
        .unwrap();

        let image = random_image(&mut rng, 1, 2, 2);
        let net = tiny_net(4, 23);
        let enc = separate_convolution(&image, &kernel).unwrap();
        let aug = build_augmented(&net, &enc).unwrap();
        assert_eq!(aug.input_dim(), 2);
        for _ in 0..50 {
            let z = [rng.gen::<f64>(), rng.gen::<f64>()];
            let via_aug = aug.forward(&z).unwrap();
            let perturbed = flatten(
                &convolve2d(&image, &kernel.evaluate(&z).unwrap(), Padding::ZeroSame).unwrap(),
            );
            let direct = net.forward_flat(perturbed.data()).unwrap();
            for (a, b) in via_aug.iter().zip(&direct) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn image_network_size_mismatch_is_reported() {
        let image = Tensor::new(vec![1, 3, 3], vec![0.5; 9]).unwrap();
        let net = tiny_net(4, 2);
        let enc = separate_convolution(&image, &box_blur_param(3).unwrap()).unwrap();
        let err = build_augmented(&net, &enc).unwrap_err();
        assert!(matches!(
            err,
            EncodeError::NetworkMismatch { encoded: 9, expected: 4 }
        ));
    }

    #[test]
    fn rank2_image_is_rejected() {
        let image = Tensor::new(vec![2, 2], vec![1.0; 4]).unwrap();
        let err = separate_convolution(&image, &box_blur_param(3).unwrap()).unwrap_err();
        assert!(matches!(err, EncodeError::ImageRank(_)));
    }
}
