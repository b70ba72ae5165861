//! Robustness verification of feed-forward networks against convolutional
//! perturbations.
//!
//! Motion blur, box blur and sharpen are modelled as kernels whose entries
//! are affine in a strength variable `z`, interpolating from the identity
//! kernel at `z = 0` to the full perturbation at `z = 1`. Convolution is
//! linear, so convolving a fixed image with such a kernel is itself affine
//! in `z`; the result becomes a dense layer prepended to the network under
//! test, and robustness over a strength interval reduces to verifying the
//! augmented network over a box with one dimension per strength variable.
//! Symbolic bound propagation plus input-splitting branch and bound then
//! certifies the query, refutes it with a concrete witness, or gives up.
//!
//! The crate also reimplements the per-pixel neighbourhood-bound baseline it
//! is measured against, and ships a CLI (`kernelverify`) for one-off queries,
//! kernel inspection, benchmark sweeps and fixture generation.
//!
//! ```
//! use kernelverify::kernel::{box_blur_param, StrengthDomain};
//!
//! let kernel = box_blur_param(3)?;
//! // at z = 0 the kernel is the identity, at z = 1 a uniform average
//! let identity = kernel.evaluate(&[0.0])?;
//! assert_eq!(identity.at2(1, 1), 1.0);
//! let full = kernel.evaluate(&[1.0])?;
//! assert!((full.at2(0, 0) - 1.0 / 9.0).abs() < 1e-15);
//! // every intermediate kernel still sums to one
//! assert!((kernel.evaluate(&[0.37])?.sum() - 1.0).abs() < 1e-12);
//! # let _ = StrengthDomain::interval(0.0, 1.0)?;
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod baseline;
pub mod bench;
pub mod encode;
pub mod fixture;
pub mod jsonfmt;
pub mod kernel;
pub mod network;
pub mod propagate;
pub mod tensor;
pub mod verify;

pub use kernel::{KernelFamily, KernelSpec, ParamKernel, StrengthDomain};
pub use network::{load_network, predicted_class, AugmentedNetwork, Network};
pub use tensor::{convolve2d, flatten, reshape, Padding, Tensor};
pub use verify::{verify, Method, Verdict, VerdictStatus, VerificationQuery, VerifyConfig};

// The guide chapters double as doctests so the book cannot drift from the
// library; `cargo test --doc` runs every fenced Rust block in book/src.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/tensors-and-convolution.md")]
    pub mod tensors_and_convolution {}
    #[doc = include_str!("../../../book/src/parameterised-kernels.md")]
    pub mod parameterised_kernels {}
    #[doc = include_str!("../../../book/src/encoding-perturbations.md")]
    pub mod encoding_perturbations {}
    #[doc = include_str!("../../../book/src/bound-propagation.md")]
    pub mod bound_propagation {}
    #[doc = include_str!("../../../book/src/branch-and-bound.md")]
    pub mod branch_and_bound {}
    #[doc = include_str!("../../../book/src/baseline-bounds.md")]
    pub mod baseline_bounds {}
    #[doc = include_str!("../../../book/src/cli-and-formats.md")]
    pub mod cli_and_formats {}
}
