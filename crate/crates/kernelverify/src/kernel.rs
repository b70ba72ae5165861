//! Linearly parameterised perturbation kernels.
//!
//! A parameterised kernel is `P(z) = sum_i A_i * z_i + B` where the `A_i` are
//! coefficient matrices and `B` is a bias matrix. Every built-in family uses
//! a single variable (`m = 1`) and interpolates from the identity kernel at
//! `z = 0` to the target perturbation at `z = 1`:
//!
//! * motion blur with a trail at 0, 45, 90 or 135 degrees,
//! * box blur (uniform averaging),
//! * sharpen (amplified center, negative diamond).
//!
//! Coefficients sum to zero and the bias sums to one, so `P(z)` sums to one
//! for every `z` and convolving with it preserves image brightness.
//!
//! Even kernel sizes have no exact identity kernel; their `z = 0` kernel is a
//! 2x2 box blur around the true center and constructions carry
//! [`KernelWarning::EvenIdentityApprox`].

use std::fmt;

use thiserror::Error;

use crate::tensor::{identity_kernel, Tensor};

/// Direction of a motion-blur trail.
///
/// 0 degrees blurs along the center column, 90 along the center row, 45 along
/// the antidiagonal (top right to bottom left) and 135 along the main
/// diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlurAngle {
    Deg0,
    Deg45,
    Deg90,
    Deg135,
}

impl BlurAngle {
    pub fn degrees(self) -> u32 {
        match self {
            BlurAngle::Deg0 => 0,
            BlurAngle::Deg45 => 45,
            BlurAngle::Deg90 => 90,
            BlurAngle::Deg135 => 135,
        }
    }

    /// Only the four trails the kernel derivations define are accepted.
    pub fn from_degrees(deg: u32) -> Result<Self, KernelError> {
        match deg {
            0 => Ok(BlurAngle::Deg0),
            45 => Ok(BlurAngle::Deg45),
            90 => Ok(BlurAngle::Deg90),
            135 => Ok(BlurAngle::Deg135),
            other => Err(KernelError::UnsupportedAngle(other)),
        }
    }
}

/// Perturbation family of a parameterised kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    MotionBlur(BlurAngle),
    BoxBlur,
    Sharpen,
}

impl KernelFamily {
    pub fn name(&self) -> &'static str {
        match self {
            KernelFamily::MotionBlur(_) => "motion-blur",
            KernelFamily::BoxBlur => "box-blur",
            KernelFamily::Sharpen => "sharpen",
        }
    }

    pub fn angle(&self) -> Option<BlurAngle> {
        match self {
            KernelFamily::MotionBlur(a) => Some(*a),
            _ => None,
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelFamily::MotionBlur(a) => write!(f, "motion-blur-{}", a.degrees()),
            KernelFamily::BoxBlur => write!(f, "box-blur"),
            KernelFamily::Sharpen => write!(f, "sharpen"),
        }
    }
}

/// Whether the kernel size admits an exact identity kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Odd,
    EvenApprox,
}

/// Machine-readable caveats attached to a constructed kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelWarning {
    /// `z = 0` evaluates to a 2x2 box blur, not the identity.
    EvenIdentityApprox,
}

impl KernelWarning {
    pub fn code(self) -> &'static str {
        match self {
            KernelWarning::EvenIdentityApprox => "even-identity-approx",
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("kernel size must be at least {min}, got {got}")]
    SizeTooSmall { min: usize, got: usize },
    #[error("size {0} is even; even sizes are built with even_param and are opt-in")]
    EvenSize(usize),
    #[error("size {0} is odd; even_param only builds even sizes")]
    OddSize(usize),
    #[error("unsupported motion-blur angle {0} (supported: 0, 45, 90, 135)")]
    UnsupportedAngle(u32),
    #[error("sharpen negative-entry count mismatch: closed form gives {closed_form}, cell classification gives {classified}")]
    SharpenCountMismatch { closed_form: usize, classified: usize },
    #[error("kernel normalisation violated: sum of {what} is {sum:e}, expected {expected}")]
    NotNormalised {
        what: &'static str,
        sum: f64,
        expected: f64,
    },
    #[error("evaluate expects {expected} variables, got {got}")]
    VariableCount { expected: usize, got: usize },
}

/// Per-variable interval for the perturbation strength, each inside [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct StrengthDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Debug, Error, PartialEq)]
pub enum DomainError {
    #[error("strength interval [{lo}, {hi}] at variable {var} is not inside [0, 1] or is reversed")]
    BadInterval { var: usize, lo: f64, hi: f64 },
    #[error("strength domain needs at least one variable")]
    Empty,
}

impl StrengthDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, DomainError> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(DomainError::Empty);
        }
        for (var, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
                return Err(DomainError::BadInterval { var, lo, hi });
            }
        }
        Ok(Self { lower, upper })
    }

    /// One-variable domain `[lo, hi]`.
    pub fn interval(lo: f64, hi: f64) -> Result<Self, DomainError> {
        Self::new(vec![lo], vec![hi])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        z.len() == self.dim()
            && z.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&v, (&lo, &hi))| v >= lo && v <= hi)
    }
}

/// A kernel whose entries are affine in `m` strength variables.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamKernel {
    size: usize,
    family: KernelFamily,
    parity: Parity,
    coeffs: Vec<Tensor>,
    bias: Tensor,
    warning: Option<KernelWarning>,
}

impl ParamKernel {
    /// Builds a kernel from raw coefficient and bias matrices, enforcing the
    /// normalisation invariants (`sum A_i = 0`, `sum B = 1` within 1e-12).
    pub fn from_parts(
        size: usize,
        family: KernelFamily,
        parity: Parity,
        coeffs: Vec<Tensor>,
        bias: Tensor,
        warning: Option<KernelWarning>,
    ) -> Result<Self, KernelError> {
        for a in &coeffs {
            let sum = a.sum();
            if sum.abs() > 1e-12 {
                return Err(KernelError::NotNormalised {
                    what: "coefficient matrix entries",
                    sum,
                    expected: 0.0,
                });
            }
        }
        let bias_sum = bias.sum();
        if (bias_sum - 1.0).abs() > 1e-12 {
            return Err(KernelError::NotNormalised {
                what: "bias matrix entries",
                sum: bias_sum,
                expected: 1.0,
            });
        }
        Ok(Self {
            size,
            family,
            parity,
            coeffs,
            bias,
            warning,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    /// Number of strength variables `m`.
    pub fn num_vars(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[Tensor] {
        &self.coeffs
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    pub fn warning(&self) -> Option<KernelWarning> {
        self.warning
    }

    /// Evaluates `P(z) = sum_i A_i z_i + B`.
    pub fn evaluate(&self, z: &[f64]) -> Result<Tensor, KernelError> {
        if z.len() != self.num_vars() {
            return Err(KernelError::VariableCount {
                expected: self.num_vars(),
                got: z.len(),
            });
        }
        let mut data = self.bias.data().to_vec();
        for (a, &zi) in self.coeffs.iter().zip(z) {
            for (d, &c) in data.iter_mut().zip(a.data()) {
                *d += c * zi;
            }
        }
        Ok(Tensor::new(vec![self.size, self.size], data).expect("kernel stays finite"))
    }
}

fn require_odd(s: usize) -> Result<(), KernelError> {
    if s < 3 {
        return Err(KernelError::SizeTooSmall { min: 3, got: s });
    }
    if s % 2 == 0 {
        return Err(KernelError::EvenSize(s));
    }
    Ok(())
}

fn square(s: usize, data: Vec<f64>) -> Tensor {
    Tensor::new(vec![s, s], data).expect("kernel matrices are finite and square")
}

/// True when `(i, j)` lies on the blur trail for `angle` in an `s`-size grid.
fn on_trail_odd(i: usize, j: usize, s: usize, angle: BlurAngle) -> bool {
    let c = (s - 1) / 2;
    match angle {
        BlurAngle::Deg0 => j == c,
        BlurAngle::Deg90 => i == c,
        BlurAngle::Deg45 => i + j == s - 1,
        BlurAngle::Deg135 => i == j,
    }
}

/// Motion-blur kernel of odd size `s` with the given trail angle.
///
/// The center entry is `(1/s - 1) z + 1`, the other trail entries are `z/s`
/// and everything off the trail is zero.
pub fn motion_blur_param(s: usize, angle: BlurAngle) -> Result<ParamKernel, KernelError> {
    require_odd(s)?;
    let c = (s - 1) / 2;
    let mut a = vec![0.0; s * s];
    for i in 0..s {
        for j in 0..s {
            if (i, j) == (c, c) {
                a[i * s + j] = 1.0 / s as f64 - 1.0;
            } else if on_trail_odd(i, j, s, angle) {
                a[i * s + j] = 1.0 / s as f64;
            }
        }
    }
    ParamKernel::from_parts(
        s,
        KernelFamily::MotionBlur(angle),
        Parity::Odd,
        vec![square(s, a)],
        identity_kernel(s),
        None,
    )
}

/// Box-blur kernel of odd size `s`: center `(1/s^2 - 1) z + 1`, others `z/s^2`.
pub fn box_blur_param(s: usize) -> Result<ParamKernel, KernelError> {
    require_odd(s)?;
    let c = (s - 1) / 2;
    let inv = 1.0 / (s * s) as f64;
    let mut a = vec![inv; s * s];
    a[c * s + c] = inv - 1.0;
    ParamKernel::from_parts(
        s,
        KernelFamily::BoxBlur,
        Parity::Odd,
        vec![square(s, a)],
        identity_kernel(s),
        None,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SharpenCell {
    Center,
    Zero,
    Negative,
}

/// Classifies cell `(i, j)` of an odd sharpen kernel. Row `i` (0-based) has
/// `|i - c|` zero entries at each end; the negative entries form a diamond
/// around the center.
fn classify_sharpen_odd(i: usize, j: usize, s: usize) -> SharpenCell {
    let c = (s - 1) / 2;
    if (i, j) == (c, c) {
        return SharpenCell::Center;
    }
    let zeros = i.abs_diff(c);
    if j < zeros || j >= s - zeros {
        SharpenCell::Zero
    } else {
        SharpenCell::Negative
    }
}

/// Sharpen kernel of odd size `s`: center `z + 1`, negative entries `-z/q_n`.
///
/// `q_n` comes from the closed-form count `s^2 - q_z - 1` with
/// `q_z = 2 * ((s-1)/2) * ((s-1)/2 + 1)` and is cross-checked against an
/// explicit classification pass over all cells.
pub fn sharpen_param(s: usize) -> Result<ParamKernel, KernelError> {
    require_odd(s)?;
    let half = (s - 1) / 2;
    let q_z = 2 * half * (half + 1);
    let q_n = s * s - q_z - 1;

    let mut a = vec![0.0; s * s];
    let mut classified_negative = 0usize;
    for i in 0..s {
        for j in 0..s {
            match classify_sharpen_odd(i, j, s) {
                SharpenCell::Center => a[i * s + j] = 1.0,
                SharpenCell::Zero => {}
                SharpenCell::Negative => {
                    classified_negative += 1;
                    a[i * s + j] = -1.0 / q_n as f64;
                }
            }
        }
    }
    if classified_negative != q_n {
        return Err(KernelError::SharpenCountMismatch {
            closed_form: q_n,
            classified: classified_negative,
        });
    }
    ParamKernel::from_parts(
        s,
        KernelFamily::Sharpen,
        Parity::Odd,
        vec![square(s, a)],
        identity_kernel(s),
        None,
    )
}

fn is_center_even(i: usize, j: usize, s: usize) -> bool {
    let lo = s / 2 - 1;
    let hi = s / 2;
    (i == lo || i == hi) && (j == lo || j == hi)
}

fn classify_sharpen_even(i: usize, j: usize, s: usize) -> SharpenCell {
    if is_center_even(i, j, s) {
        return SharpenCell::Center;
    }
    let half = s / 2;
    let zeros = (half.saturating_sub(i + 1)).max(i.saturating_sub(half));
    if j < zeros || j >= s - zeros {
        SharpenCell::Zero
    } else {
        SharpenCell::Negative
    }
}

/// Even-size variants of all families; the `z = 0` kernel is the 2x2 block of
/// 1/4 around the true center, so the result carries
/// [`KernelWarning::EvenIdentityApprox`].
pub fn even_param(family: KernelFamily, s: usize) -> Result<ParamKernel, KernelError> {
    if s < 2 {
        return Err(KernelError::SizeTooSmall { min: 2, got: s });
    }
    if s % 2 == 1 {
        return Err(KernelError::OddSize(s));
    }
    let sf = s as f64;
    let mut bias = vec![0.0; s * s];
    for i in [s / 2 - 1, s / 2] {
        for j in [s / 2 - 1, s / 2] {
            bias[i * s + j] = 0.25;
        }
    }

    let mut a = vec![0.0; s * s];
    match family {
        KernelFamily::MotionBlur(angle @ (BlurAngle::Deg0 | BlurAngle::Deg90)) => {
            // Trail runs through the two rows/columns closest to the center.
            let lanes = [s / 2 - 1, s / 2];
            for i in 0..s {
                for j in 0..s {
                    let on_trail = match angle {
                        BlurAngle::Deg0 => lanes.contains(&j),
                        _ => lanes.contains(&i),
                    };
                    if !on_trail {
                        continue;
                    }
                    a[i * s + j] = if is_center_even(i, j, s) {
                        1.0 / (2.0 * sf) - 0.25
                    } else {
                        1.0 / (2.0 * sf)
                    };
                }
            }
        }
        KernelFamily::MotionBlur(angle @ (BlurAngle::Deg45 | BlurAngle::Deg135)) => {
            // The diagonal trail is well-defined for even sizes; center cells
            // split into on-diagonal and off-diagonal entries.
            for i in 0..s {
                for j in 0..s {
                    let on_trail = match angle {
                        BlurAngle::Deg45 => i + j == s - 1,
                        _ => i == j,
                    };
                    if is_center_even(i, j, s) {
                        a[i * s + j] = if on_trail { 1.0 / sf - 0.25 } else { -0.25 };
                    } else if on_trail {
                        a[i * s + j] = 1.0 / sf;
                    }
                }
            }
        }
        KernelFamily::BoxBlur => {
            let inv = 1.0 / (sf * sf);
            for i in 0..s {
                for j in 0..s {
                    a[i * s + j] = if is_center_even(i, j, s) { inv - 0.25 } else { inv };
                }
            }
        }
        KernelFamily::Sharpen => {
            let half = s / 2;
            let q_z = 2 * (half - 1) * half;
            let q_n = (s * s).saturating_sub(q_z + 4);
            if q_n == 0 {
                // s = 2 leaves no negative entries to balance the center growth.
                return Err(KernelError::SizeTooSmall { min: 4, got: s });
            }
            let mut classified_negative = 0usize;
            for i in 0..s {
                for j in 0..s {
                    match classify_sharpen_even(i, j, s) {
                        SharpenCell::Center => a[i * s + j] = 0.25,
                        SharpenCell::Zero => {}
                        SharpenCell::Negative => {
                            classified_negative += 1;
                            a[i * s + j] = -1.0 / q_n as f64;
                        }
                    }
                }
            }
            if classified_negative != q_n {
                return Err(KernelError::SharpenCountMismatch {
                    closed_form: q_n,
                    classified: classified_negative,
                });
            }
        }
    }
    ParamKernel::from_parts(
        s,
        family,
        Parity::EvenApprox,
        vec![square(s, a)],
        square(s, bias),
        Some(KernelWarning::EvenIdentityApprox),
    )
}

/// Family plus size, the kernel description carried by verification queries
/// and property files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub size: usize,
}

impl KernelSpec {
    /// Builds the parameterised kernel; even sizes require the explicit
    /// opt-in since their `z = 0` point blurs the image.
    pub fn build(&self, allow_even: bool) -> Result<ParamKernel, KernelError> {
        if self.size % 2 == 0 {
            if !allow_even {
                return Err(KernelError::EvenSize(self.size));
            }
            return even_param(self.family, self.size);
        }
        match self.family {
            KernelFamily::MotionBlur(angle) => motion_blur_param(self.size, angle),
            KernelFamily::BoxBlur => box_blur_param(self.size),
            KernelFamily::Sharpen => sharpen_param(self.size),
        }
    }
}

/// All six built-in families: box blur, sharpen, and the four blur angles.
pub fn builtin_families() -> Vec<KernelFamily> {
    vec![
        KernelFamily::BoxBlur,
        KernelFamily::Sharpen,
        KernelFamily::MotionBlur(BlurAngle::Deg0),
        KernelFamily::MotionBlur(BlurAngle::Deg45),
        KernelFamily::MotionBlur(BlurAngle::Deg90),
        KernelFamily::MotionBlur(BlurAngle::Deg135),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_matrix_close(t: &Tensor, expected: &[&[f64]], tol: f64) {
        let s = expected.len();
        assert_eq!(t.shape(), &[s, s]);
        for i in 0..s {
            for j in 0..s {
                let got = t.at2(i, j);
                let want = expected[i][j];
                assert!(
                    (got - want).abs() <= tol,
                    "entry ({i},{j}): got {got}, want {want}"
                );
            }
        }
    }

    #[test]
    fn motion_blur_45_size3_matches_example_derivation() {
        let pk = motion_blur_param(3, BlurAngle::Deg45).unwrap();
        let third = 1.0 / 3.0;
        // A entries that come straight from a division are bit-exact.
        let a = &pk.coeffs()[0];
        assert_eq!(a.at2(0, 2), third);
        assert_eq!(a.at2(2, 0), third);
        assert!((a.at2(1, 1) - (-2.0 / 3.0)).abs() <= 1e-15);
        for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 2), (2, 1), (2, 2)] {
            assert_eq!(a.at2(i, j), 0.0);
        }
        assert_eq!(pk.bias(), &identity_kernel(3));
    }

    #[test]
    fn motion_blur_z0_is_identity_and_z1_is_figure_kernel() {
        for s in [3, 5, 7, 9] {
            for angle in [BlurAngle::Deg0, BlurAngle::Deg45, BlurAngle::Deg90, BlurAngle::Deg135] {
                let pk = motion_blur_param(s, angle).unwrap();
                assert_eq!(pk.evaluate(&[0.0]).unwrap(), identity_kernel(s));
            }
        }
        let p1 = motion_blur_param(3, BlurAngle::Deg45).unwrap().evaluate(&[1.0]).unwrap();
        let third = 1.0 / 3.0;
        assert_matrix_close(
            &p1,
            &[
                &[0.0, 0.0, third],
                &[0.0, third, 0.0],
                &[third, 0.0, 0.0],
            ],
            1e-15,
        );
    }

    #[test]
    fn motion_blur_90_size5_center_row() {
        let pk = motion_blur_param(5, BlurAngle::Deg90).unwrap();
        let a = &pk.coeffs()[0];
        assert!((a.at2(2, 2) - (1.0 / 5.0 - 1.0)).abs() <= 1e-15);
        for j in [0, 1, 3, 4] {
            assert_eq!(a.at2(2, j), 0.2);
        }
        assert_eq!(a.at2(0, 0), 0.0);
        assert_eq!(a.at2(1, 2), 0.0);
    }

    #[test]
    fn box_blur_size3_matches_figure_at_z1() {
        let p1 = box_blur_param(3).unwrap().evaluate(&[1.0]).unwrap();
        let ninth = 1.0 / 9.0;
        for i in 0..3 {
            for j in 0..3 {
                assert!((p1.at2(i, j) - ninth).abs() <= 1e-15);
                if (i, j) != (1, 1) {
                    assert_eq!(p1.at2(i, j), ninth);
                }
            }
        }
        let pk = box_blur_param(3).unwrap();
        let a = &pk.coeffs()[0];
        assert!((a.at2(1, 1) - (-8.0 / 9.0)).abs() <= 1e-15);
    }

    #[test]
    fn box_blur_size5_coefficients() {
        let pk = box_blur_param(5).unwrap();
        let a = &pk.coeffs()[0];
        assert!((a.at2(2, 2) - (1.0 / 25.0 - 1.0)).abs() <= 1e-15);
        assert_eq!(a.at2(0, 0), 1.0 / 25.0);
    }

    #[test]
    fn box_blur_midpoint_example() {
        // center 1 - 8/9 * 0.5 = 5/9, all others 1/18
        let p = box_blur_param(3).unwrap().evaluate(&[0.5]).unwrap();
        assert!((p.at2(1, 1) - 5.0 / 9.0).abs() <= 1e-15);
        for (i, j) in [(0, 0), (0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1), (2, 2)] {
            assert!((p.at2(i, j) - 1.0 / 18.0).abs() <= 1e-15);
        }
    }

    #[test]
    fn sharpen_size3_matches_figure() {
        let pk = sharpen_param(3).unwrap();
        let p1 = pk.evaluate(&[1.0]).unwrap();
        assert_matrix_close(
            &p1,
            &[
                &[0.0, -0.25, 0.0],
                &[-0.25, 2.0, -0.25],
                &[0.0, -0.25, 0.0],
            ],
            0.0,
        );
    }

    #[test]
    fn sharpen_size5_has_twelve_negative_entries() {
        let pk = sharpen_param(5).unwrap();
        let a = &pk.coeffs()[0];
        let negatives = a.data().iter().filter(|&&v| v < 0.0).count();
        assert_eq!(negatives, 12);
        for &v in a.data().iter().filter(|&&v| v < 0.0) {
            assert_eq!(v, -1.0 / 12.0);
        }
        assert_eq!(pk.evaluate(&[0.0]).unwrap(), identity_kernel(5));
    }

    #[test]
    fn sharpen_size5_cell_classification_matches_diagram() {
        // Rows have |i - 2| zeros at each end; negatives fill a diamond.
        let expected = [
            "zznzz", "znnnz", "nnCnn", "znnnz", "zznzz",
        ];
        for (i, row) in expected.iter().enumerate() {
            for (j, ch) in row.chars().enumerate() {
                let got = classify_sharpen_odd(i, j, 5);
                let want = match ch {
                    'z' => SharpenCell::Zero,
                    'n' => SharpenCell::Negative,
                    'C' => SharpenCell::Center,
                    _ => unreachable!(),
                };
                assert_eq!(got, want, "cell ({i},{j})");
            }
        }
    }

    #[test]
    fn odd_constructors_reject_even_sizes() {
        assert_eq!(
            motion_blur_param(4, BlurAngle::Deg0).unwrap_err(),
            KernelError::EvenSize(4)
        );
        assert_eq!(box_blur_param(6).unwrap_err(), KernelError::EvenSize(6));
        assert_eq!(sharpen_param(2).unwrap_err(), KernelError::SizeTooSmall { min: 3, got: 2 });
    }

    #[test]
    fn even_motion_blur_0_size4_matches_appendix_matrix() {
        let pk = even_param(KernelFamily::MotionBlur(BlurAngle::Deg0), 4).unwrap();
        assert_eq!(pk.parity(), Parity::EvenApprox);
        assert_eq!(pk.warning(), Some(KernelWarning::EvenIdentityApprox));
        let p1 = pk.evaluate(&[1.0]).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if j == 1 || j == 2 { 0.125 } else { 0.0 };
                assert_eq!(p1.at2(i, j), want, "entry ({i},{j})");
            }
        }
        // z = 0 is the 2x2 quarter block, not the identity.
        let p0 = pk.evaluate(&[0.0]).unwrap();
        assert_eq!(p0.at2(1, 1), 0.25);
        assert_eq!(p0.at2(0, 0), 0.0);
    }

    #[test]
    fn even_motion_blur_45_size4_matches_appendix_matrix() {
        let pk = even_param(KernelFamily::MotionBlur(BlurAngle::Deg45), 4).unwrap();
        let p1 = pk.evaluate(&[1.0]).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i + j == 3 { 0.25 } else { 0.0 };
                assert_eq!(p1.at2(i, j), want, "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn even_box_blur_size4_matches_appendix_matrix() {
        let p1 = even_param(KernelFamily::BoxBlur, 4).unwrap().evaluate(&[1.0]).unwrap();
        for &v in p1.data() {
            assert_eq!(v, 1.0 / 16.0);
        }
    }

    #[test]
    fn even_sharpen_size4_matches_appendix_matrix() {
        let pk = even_param(KernelFamily::Sharpen, 4).unwrap();
        let p1 = pk.evaluate(&[1.0]).unwrap();
        let e = -1.0 / 8.0;
        assert_matrix_close(
            &p1,
            &[
                &[0.0, e, e, 0.0],
                &[e, 0.5, 0.5, e],
                &[e, 0.5, 0.5, e],
                &[0.0, e, e, 0.0],
            ],
            0.0,
        );
    }

    #[test]
    fn even_sharpen_size2_is_rejected() {
        assert_eq!(
            even_param(KernelFamily::Sharpen, 2).unwrap_err(),
            KernelError::SizeTooSmall { min: 4, got: 2 }
        );
    }

    #[test]
    fn even_param_rejects_odd_sizes() {
        assert_eq!(
            even_param(KernelFamily::BoxBlur, 5).unwrap_err(),
            KernelError::OddSize(5)
        );
    }

    #[test]
    fn normalisation_holds_for_dense_z_sampling() {
        let mut kernels = Vec::new();
        for s in [3, 5, 7, 9] {
            kernels.push(box_blur_param(s).unwrap());
            kernels.push(sharpen_param(s).unwrap());
            for angle in [BlurAngle::Deg0, BlurAngle::Deg45, BlurAngle::Deg90, BlurAngle::Deg135] {
                kernels.push(motion_blur_param(s, angle).unwrap());
            }
        }
        for s in [2, 4, 6] {
            for family in builtin_families() {
                if family == KernelFamily::Sharpen && s == 2 {
                    continue;
                }
                kernels.push(even_param(family, s).unwrap());
            }
        }
        for pk in &kernels {
            for step in 0..=1000 {
                let z = step as f64 / 1000.0;
                let sum = pk.evaluate(&[z]).unwrap().sum();
                assert!(
                    (sum - 1.0).abs() <= 1e-12,
                    "{} s={} z={z}: sum {sum}",
                    pk.family(),
                    pk.size()
                );
            }
        }
    }

    #[test]
    fn evaluation_is_affine_in_z() {
        for pk in [
            box_blur_param(5).unwrap(),
            sharpen_param(7).unwrap(),
            motion_blur_param(9, BlurAngle::Deg135).unwrap(),
            even_param(KernelFamily::BoxBlur, 4).unwrap(),
        ] {
            let (za, zb) = (0.12, 0.93);
            let mid = pk.evaluate(&[(za + zb) / 2.0]).unwrap();
            let pa = pk.evaluate(&[za]).unwrap();
            let pb = pk.evaluate(&[zb]).unwrap();
            let avg = pa.zip_map(&pb, |x, y| (x + y) / 2.0).unwrap();
            for (&m, &v) in mid.data().iter().zip(avg.data()) {
                assert!((m - v).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn rotation_and_transposition_symmetries() {
        let rot90 = |t: &Tensor| {
            let s = t.shape()[0];
            let mut out = vec![0.0; s * s];
            for i in 0..s {
                for j in 0..s {
                    out[j * s + (s - 1 - i)] = t.at2(i, j);
                }
            }
            Tensor::new(vec![s, s], out).unwrap()
        };
        let transpose = |t: &Tensor| {
            let s = t.shape()[0];
            let mut out = vec![0.0; s * s];
            for i in 0..s {
                for j in 0..s {
                    out[j * s + i] = t.at2(i, j);
                }
            }
            Tensor::new(vec![s, s], out).unwrap()
        };
        for s in [3, 5, 7] {
            for z in [0.0, 0.3, 1.0] {
                let boxes = box_blur_param(s).unwrap().evaluate(&[z]).unwrap();
                assert_eq!(rot90(&boxes), boxes);
                let sharp = sharpen_param(s).unwrap().evaluate(&[z]).unwrap();
                assert_eq!(rot90(&sharp), sharp);
                let m0 = motion_blur_param(s, BlurAngle::Deg0).unwrap().evaluate(&[z]).unwrap();
                let m90 = motion_blur_param(s, BlurAngle::Deg90).unwrap().evaluate(&[z]).unwrap();
                assert_eq!(transpose(&m0), m90);
                // the diagonal trails are transpose-invariant; 45 and 135
                // degrees are horizontal mirror images of each other
                let fliplr = |t: &Tensor| {
                    let s = t.shape()[0];
                    let mut out = vec![0.0; s * s];
                    for i in 0..s {
                        for j in 0..s {
                            out[i * s + (s - 1 - j)] = t.at2(i, j);
                        }
                    }
                    Tensor::new(vec![s, s], out).unwrap()
                };
                let m45 = motion_blur_param(s, BlurAngle::Deg45).unwrap().evaluate(&[z]).unwrap();
                let m135 = motion_blur_param(s, BlurAngle::Deg135).unwrap().evaluate(&[z]).unwrap();
                assert_eq!(transpose(&m45), m45);
                assert_eq!(fliplr(&m45), m135);
            }
        }
    }

    #[test]
    fn strength_domain_validation() {
        assert!(StrengthDomain::interval(0.0, 1.0).is_ok());
        assert!(StrengthDomain::interval(0.2, 0.7).is_ok());
        assert!(matches!(
            StrengthDomain::interval(-0.1, 0.5),
            Err(DomainError::BadInterval { .. })
        ));
        assert!(matches!(
            StrengthDomain::interval(0.6, 0.5),
            Err(DomainError::BadInterval { .. })
        ));
        assert!(matches!(
            StrengthDomain::new(vec![], vec![]),
            Err(DomainError::Empty)
        ));
    }

    #[test]
    fn evaluate_rejects_wrong_variable_count() {
        let pk = box_blur_param(3).unwrap();
        assert_eq!(
            pk.evaluate(&[0.1, 0.2]).unwrap_err(),
            KernelError::VariableCount { expected: 1, got: 2 }
        );
    }

    #[test]
    fn unsupported_angle_rejected() {
        assert_eq!(
            BlurAngle::from_degrees(30).unwrap_err(),
            KernelError::UnsupportedAngle(30)
        );
    }
}
