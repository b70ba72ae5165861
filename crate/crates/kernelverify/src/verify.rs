//! Verification queries, verdicts, the sampling attack engine and the
//! input-splitting branch-and-bound loop.
//!
//! The parameterised method prepends the encoded perturbation to the network
//! and runs symbolic bound propagation over the strength box, bisecting the
//! widest variable until every leaf certifies, a counterexample shows up, or
//! the width floor / timeout is hit. Subproblems are processed in waves:
//! every box in the frontier is evaluated (in parallel across workers), then
//! survivors split. A wave always completes, and the reported witness is the
//! lexicographically smallest one found in the wave that produced it, so
//! verdict, witness and subproblem count do not depend on the worker count.
//!
//! The baseline method replaces the strength box by the per-pixel
//! neighbourhood box of [`crate::baseline`] and runs a single propagation
//! pass plus corner/random sampling, with no splitting: the perturbation has
//! one dimension per pixel, where input splitting has no traction.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::prelude::*;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::{neighborhood_bounds, BaselineError};
use crate::encode::{build_augmented, separate_convolution, EncodeError};
use crate::kernel::{
    BlurAngle, DomainError, KernelError, KernelFamily, KernelSpec, StrengthDomain,
};
use crate::network::{predicted_class, AugmentedNetwork, Network, NetworkError};
use crate::propagate::{
    check_output_spec, CertifyOutcome, InputBox, PropagateError, PropagationPlan,
};
use crate::tensor::{flatten, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("network misclassifies the unperturbed image as {predicted}, label is {label}")]
    Misclassified { predicted: usize, label: usize },
    #[error("kernel has {kernel_vars} variables but the strength domain has {domain_vars}")]
    DomainMismatch {
        kernel_vars: usize,
        domain_vars: usize,
    },
    #[error("image shape {image:?} does not match network input {expected:?}")]
    ImageShape {
        image: Vec<usize>,
        expected: (usize, usize, usize),
    },
    #[error("witness failed concrete re-validation")]
    WitnessInvalid,
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: String, message: String },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Propagate(#[from] PropagateError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// How a query is verified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Parameterised kernel prepended as an affine layer; input splitting.
    Param,
    /// Per-pixel neighbourhood box; single propagation pass.
    Baseline,
}

/// One robustness query: a network, a correctly classified image, a kernel
/// family with a strength interval, and a budget.
#[derive(Debug, Clone)]
pub struct VerificationQuery {
    pub network: Network,
    pub image: Tensor,
    pub label: usize,
    pub kernel: KernelSpec,
    pub domain: StrengthDomain,
    pub timeout: Duration,
    pub method: Method,
}

/// Engine knobs; the defaults match the documented desk-scale setup.
#[derive(Debug, Clone)]
pub struct VerifyConfig {
    /// Worker threads for in-wave subproblem processing.
    pub workers: usize,
    /// Leaves narrower than this stay undecided instead of splitting.
    pub min_split_width: f64,
    /// Attack evaluations per subproblem (endpoints, midpoint, grid).
    pub attack_points: usize,
    /// Corner/random samples for the baseline attack.
    pub baseline_samples: usize,
    /// Seed for the baseline sampling attack.
    pub baseline_seed: u64,
    /// Permit even kernel sizes (approximate identity at z = 0).
    pub allow_even: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            workers: 1,
            min_split_width: 1e-6,
            attack_points: 9,
            baseline_samples: 256,
            baseline_seed: 0x6b65726e,
            allow_even: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictStatus {
    Safe,
    Unsafe,
    Undecided,
}

/// Verification outcome with search statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub status: VerdictStatus,
    /// Perturbation variables for `Unsafe` (param method) or the full
    /// misclassified input vector (baseline method).
    pub witness: Option<Vec<f64>>,
    pub reason: Option<String>,
    pub subproblems: u64,
    pub max_depth: u32,
    pub time: Duration,
}

impl Verdict {
    fn decided(status: VerdictStatus, witness: Option<Vec<f64>>) -> Self {
        Self {
            status,
            witness,
            reason: None,
            subproblems: 0,
            max_depth: 0,
            time: Duration::ZERO,
        }
    }

    fn undecided(reason: &str) -> Self {
        Self {
            status: VerdictStatus::Undecided,
            witness: None,
            reason: Some(reason.to_string()),
            subproblems: 0,
            max_depth: 0,
            time: Duration::ZERO,
        }
    }

    /// The wire form fixed by the CLI contract.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Wire<'a> {
            status: &'a VerdictStatus,
            witness: &'a Option<Vec<f64>>,
            reason: &'a Option<String>,
            subproblems: u64,
            time_s: f64,
        }
        serde_json::to_string_pretty(&Wire {
            status: &self.status,
            witness: &self.witness,
            reason: &self.reason,
            subproblems: self.subproblems,
            time_s: self.time.as_secs_f64(),
        })
        .expect("verdict serialisation cannot fail")
    }
}

// ---------------------------------------------------------------------------
// Attack engine
// ---------------------------------------------------------------------------

/// Deterministic candidate sequence over a box: corners in lexicographic
/// order, center, then a uniform interior grid, truncated to `budget`.
fn candidate_points(domain: &StrengthDomain, budget: usize) -> Vec<Vec<f64>> {
    let m = domain.dim();
    let mut points = Vec::with_capacity(budget);
    let corners = 1usize << m.min(16);
    for mask in 0..corners {
        if points.len() >= budget {
            return points;
        }
        points.push(
            (0..m)
                .map(|i| {
                    if mask >> i & 1 == 0 {
                        domain.lower()[i]
                    } else {
                        domain.upper()[i]
                    }
                })
                .collect(),
        );
    }
    if points.len() < budget {
        points.push(
            (0..m)
                .map(|i| 0.5 * (domain.lower()[i] + domain.upper()[i]))
                .collect(),
        );
    }
    let remaining = budget.saturating_sub(points.len());
    if remaining == 0 {
        return points;
    }
    // interior lattice: g points per axis, g^m <= remaining
    let g = if m == 1 {
        remaining
    } else {
        (remaining as f64).powf(1.0 / m as f64).floor().max(1.0) as usize
    };
    let mut index = vec![0usize; m];
    loop {
        if points.len() >= budget {
            break;
        }
        points.push(
            (0..m)
                .map(|i| {
                    let t = (index[i] + 1) as f64 / (g + 1) as f64;
                    domain.lower()[i] + t * (domain.upper()[i] - domain.lower()[i])
                })
                .collect(),
        );
        let mut axis = 0;
        loop {
            index[axis] += 1;
            if index[axis] < g {
                break;
            }
            index[axis] = 0;
            axis += 1;
            if axis == m {
                return points;
            }
        }
    }
    points
}

/// Evaluates the augmented network at domain endpoints, midpoint and a
/// uniform grid (at most `budget` points) and returns the first strength
/// vector whose prediction differs from `label`.
pub fn attack(
    aug: &AugmentedNetwork,
    domain: &StrengthDomain,
    label: usize,
    budget: usize,
) -> Result<Option<Vec<f64>>, VerifyError> {
    debug_assert!(budget >= 2);
    for z in candidate_points(domain, budget) {
        let logits = aug.forward(&z)?;
        if predicted_class(&logits) != label {
            return Ok(Some(z));
        }
    }
    Ok(None)
}

// ---------------------------------------------------------------------------
// Deterministic wave-parallel map
// ---------------------------------------------------------------------------

fn parallel_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    let mut results: Vec<Option<R>> = std::iter::repeat_with(|| None).take(items.len()).collect();
    let chunk = items.len().div_ceil(workers);
    std::thread::scope(|scope| {
        for (item_chunk, result_chunk) in items.chunks(chunk).zip(results.chunks_mut(chunk)) {
            let f = &f;
            scope.spawn(move || {
                for (item, slot) in item_chunk.iter().zip(result_chunk.iter_mut()) {
                    *slot = Some(f(item));
                }
            });
        }
    });
    results
        .into_iter()
        .map(|r| r.expect("every slot written by its worker"))
        .collect()
}

// ---------------------------------------------------------------------------
// Branch and bound
// ---------------------------------------------------------------------------

enum SubResult {
    Certified,
    Witness(Vec<f64>),
    Split,
}

fn validate_query(query: &VerificationQuery) -> Result<(), VerifyError> {
    let net = &query.network;
    let (c, h, w) = net.input_shape();
    if query.image.shape() != [c, h, w] {
        return Err(VerifyError::ImageShape {
            image: query.image.shape().to_vec(),
            expected: (c, h, w),
        });
    }
    if query.label >= net.output_len() {
        return Err(VerifyError::LabelOutOfRange {
            label: query.label,
            classes: net.output_len(),
        });
    }
    let logits = net.forward_flat(flatten(&query.image).data())?;
    let predicted = predicted_class(&logits);
    if predicted != query.label {
        return Err(VerifyError::Misclassified {
            predicted,
            label: query.label,
        });
    }
    Ok(())
}

/// Decides a query with the method it carries.
pub fn verify(query: &VerificationQuery, config: &VerifyConfig) -> Result<Verdict, VerifyError> {
    match query.method {
        Method::Param => verify_param(query, config),
        Method::Baseline => verify_baseline(query, config),
    }
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

/// Input-splitting branch and bound over the strength domain.
pub fn verify_param(
    query: &VerificationQuery,
    config: &VerifyConfig,
) -> Result<Verdict, VerifyError> {
    let start = Instant::now();
    validate_query(query)?;
    let kernel = query.kernel.build(config.allow_even)?;
    if kernel.num_vars() != query.domain.dim() {
        return Err(VerifyError::DomainMismatch {
            kernel_vars: kernel.num_vars(),
            domain_vars: query.domain.dim(),
        });
    }
    let encoded = separate_convolution(&query.image, &kernel)?;
    let aug = build_augmented(&query.network, &encoded)?;
    let plan = PropagationPlan::for_augmented(&aug);

    let process = |item: &InputBox| -> Result<SubResult, VerifyError> {
        let bounds = plan.symbolic(item)?;
        if check_output_spec(&bounds, query.label) == CertifyOutcome::Certified {
            return Ok(SubResult::Certified);
        }
        let sub_domain = StrengthDomain::new(item.lower.clone(), item.upper.clone())?;
        if let Some(z) = attack(&aug, &sub_domain, query.label, config.attack_points)? {
            return Ok(SubResult::Witness(z));
        }
        Ok(SubResult::Split)
    };

    let mut frontier = vec![InputBox::new(
        query.domain.lower().to_vec(),
        query.domain.upper().to_vec(),
    )?];
    let mut subproblems: u64 = 0;
    let mut depth: u32 = 0;
    let mut max_depth: u32 = 0;
    let mut floored_leaves: u64 = 0;

    let mut verdict = loop {
        if frontier.is_empty() {
            break if floored_leaves > 0 {
                Verdict::undecided("min-split-width")
            } else {
                Verdict::decided(VerdictStatus::Safe, None)
            };
        }
        if start.elapsed() >= query.timeout {
            break Verdict::undecided("timeout");
        }
        let results = parallel_map(&frontier, config.workers, process);
        subproblems += frontier.len() as u64;
        max_depth = depth;

        let mut wave_witness: Option<Vec<f64>> = None;
        let mut next = Vec::new();
        let mut error = None;
        for (item, result) in frontier.iter().zip(results) {
            match result {
                Ok(SubResult::Certified) => {}
                Ok(SubResult::Witness(z)) => {
                    let better = match &wave_witness {
                        None => true,
                        Some(best) => lex_less(&z, best),
                    };
                    if better {
                        wave_witness = Some(z);
                    }
                }
                Ok(SubResult::Split) => {
                    let (dim, width) = item.widest();
                    if width < config.min_split_width {
                        floored_leaves += 1;
                    } else {
                        let (a, b) = item.bisect(dim);
                        next.push(a);
                        next.push(b);
                    }
                }
                Err(e) => error = Some(e),
            }
        }
        if let Some(e) = error {
            return Err(e);
        }
        if let Some(z) = wave_witness {
            // concrete re-validation, independent of the search path
            let logits = aug.forward(&z)?;
            if predicted_class(&logits) == query.label || !query.domain.contains(&z) {
                return Err(VerifyError::WitnessInvalid);
            }
            break Verdict::decided(VerdictStatus::Unsafe, Some(z));
        }
        frontier = next;
        depth += 1;
    };

    verdict.subproblems = subproblems;
    verdict.max_depth = max_depth;
    verdict.time = start.elapsed();
    Ok(verdict)
}

/// The ablation baseline: one propagation pass over the per-pixel
/// neighbourhood box, then corner/random sampling.
pub fn verify_baseline(
    query: &VerificationQuery,
    config: &VerifyConfig,
) -> Result<Verdict, VerifyError> {
    let start = Instant::now();
    validate_query(query)?;
    let pixel_box = neighborhood_bounds(&query.image, query.kernel.size)?;
    let input = InputBox::new(
        flatten(pixel_box.lower()).data().to_vec(),
        flatten(pixel_box.upper()).data().to_vec(),
    )?;
    let plan = PropagationPlan::for_network(&query.network);
    let bounds = plan.symbolic(&input)?;

    let mut verdict = if check_output_spec(&bounds, query.label) == CertifyOutcome::Certified {
        Verdict::decided(VerdictStatus::Safe, None)
    } else {
        match baseline_attack(&query.network, &input, query.label, config)? {
            Some(x) => Verdict::decided(VerdictStatus::Unsafe, Some(x)),
            None => Verdict::undecided("bound-gap"),
        }
    };
    verdict.subproblems = 1;
    verdict.time = start.elapsed();
    Ok(verdict)
}

fn baseline_attack(
    net: &Network,
    input: &InputBox,
    label: usize,
    config: &VerifyConfig,
) -> Result<Option<Vec<f64>>, VerifyError> {
    let check = |x: &Vec<f64>| -> Result<Option<Vec<f64>>, VerifyError> {
        let logits = net.forward_flat(x)?;
        if predicted_class(&logits) != label {
            Ok(Some(x.clone()))
        } else {
            Ok(None)
        }
    };
    for candidate in [&input.lower, &input.upper] {
        if let Some(x) = check(candidate)? {
            return Ok(Some(x));
        }
    }
    let mut rng = ChaCha20Rng::seed_from_u64(config.baseline_seed);
    let n = input.dim();
    for sample in 0..config.baseline_samples {
        // alternate random corners with random interior points
        let x: Vec<f64> = if sample % 2 == 0 {
            (0..n)
                .map(|i| {
                    if rng.gen::<bool>() {
                        input.upper[i]
                    } else {
                        input.lower[i]
                    }
                })
                .collect()
        } else {
            (0..n)
                .map(|i| input.lower[i] + rng.gen::<f64>() * (input.upper[i] - input.lower[i]))
                .collect()
        };
        if let Some(found) = check(&x)? {
            return Ok(Some(found));
        }
    }
    Ok(None)
}

// ---------------------------------------------------------------------------
// Property files
// ---------------------------------------------------------------------------

/// On-disk kernel description inside a property file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpecFile {
    pub family: String,
    pub size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub angle: Option<u32>,
}

impl KernelSpecFile {
    pub fn to_spec(&self) -> Result<KernelSpec, VerifyError> {
        let family = match self.family.as_str() {
            "box-blur" => KernelFamily::BoxBlur,
            "sharpen" => KernelFamily::Sharpen,
            "motion-blur" => {
                let angle = self.angle.unwrap_or(0);
                KernelFamily::MotionBlur(BlurAngle::from_degrees(angle)?)
            }
            other => {
                return Err(VerifyError::Parse {
                    path: String::new(),
                    message: format!(
                        "unknown kernel family {other:?} (expected box-blur, sharpen or motion-blur)"
                    ),
                })
            }
        };
        Ok(KernelSpec {
            family,
            size: self.size,
        })
    }

    pub fn from_spec(spec: &KernelSpec) -> Self {
        Self {
            family: spec.family.name().to_string(),
            size: spec.size,
            angle: spec.family.angle().map(BlurAngle::degrees),
        }
    }
}

/// One verification instance on disk: image, label, kernel, strength
/// interval and timeout.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropertyFile {
    pub image: Vec<f64>,
    pub image_shape: [usize; 3],
    pub label: usize,
    pub kernel: KernelSpecFile,
    pub strength: [f64; 2],
    pub timeout_s: f64,
}

impl PropertyFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, VerifyError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| VerifyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| VerifyError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), VerifyError> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("property serialisation cannot fail");
        fs::write(path, text).map_err(|source| VerifyError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Combines the property with a loaded network into a runnable query.
    pub fn into_query(
        self,
        network: Network,
        method: Method,
        timeout_override: Option<Duration>,
    ) -> Result<VerificationQuery, VerifyError> {
        let image = Tensor::new(self.image_shape.to_vec(), self.image)?;
        let kernel = self.kernel.to_spec()?;
        let domain = StrengthDomain::interval(self.strength[0], self.strength[1])?;
        let timeout =
            timeout_override.unwrap_or_else(|| Duration::from_secs_f64(self.timeout_s.max(0.0)));
        Ok(VerificationQuery {
            network,
            image,
            label: self.label,
            kernel,
            domain,
            timeout,
            method,
        })
    }
}
