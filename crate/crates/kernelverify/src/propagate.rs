//! Interval and symbolic bound propagation.
//!
//! `interval_propagate` pushes a box through the network with plain interval
//! arithmetic. `symbolic_propagate` additionally carries one affine lower and
//! one affine upper form per neuron, expressed directly over the input
//! variables; unstable ReLUs are relaxed with the triangle relaxation (upper
//! line `u (x - l) / (u - l)`, lower line `x` or `0` by the smaller-area
//! rule). Concrete bounds are the elementwise intersection of the
//! concretised forms with interval arithmetic, so symbolic bounds are never
//! looser than interval bounds.
//!
//! Conv2d layers are materialised into equivalent dense maps once per
//! network in a [`PropagationPlan`], which branch-and-bound reuses across
//! subproblems.

use thiserror::Error;

use crate::network::{AugmentedNetwork, Layer, Network, ShapeState};

#[derive(Debug, Error, PartialEq)]
pub enum PropagateError {
    #[error("input box has {got} dimensions, the network expects {expected}")]
    BoxDim { expected: usize, got: usize },
    #[error("box lower bound exceeds upper bound at dimension {0}")]
    BoxInverted(usize),
}

/// Axis-aligned box over the propagation input variables.
#[derive(Debug, Clone, PartialEq)]
pub struct InputBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl InputBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, PropagateError> {
        if lower.len() != upper.len() {
            return Err(PropagateError::BoxDim {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if let Some(i) = lower.iter().zip(&upper).position(|(l, u)| l > u) {
            return Err(PropagateError::BoxInverted(i));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    /// Index of the widest dimension (first among ties) and its width.
    pub fn widest(&self) -> (usize, f64) {
        let mut best = (0, self.width(0));
        for i in 1..self.dim() {
            let w = self.width(i);
            if w > best.1 {
                best = (i, w);
            }
        }
        best
    }

    /// Splits at the midpoint of dimension `dim`.
    pub fn bisect(&self, dim: usize) -> (InputBox, InputBox) {
        let mid = 0.5 * (self.lower[dim] + self.upper[dim]);
        let mut left = self.clone();
        let mut right = self.clone();
        left.upper[dim] = mid;
        right.lower[dim] = mid;
        (left, right)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&v, (&l, &u))| v >= l && v <= u)
    }
}

/// Dense row-major matrix used for affine steps and symbolic forms.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

pub(crate) enum PlanStep {
    Affine { weights: Mat, bias: Vec<f64> },
    Relu,
}

/// A network lowered to affine and ReLU steps with conv layers materialised.
pub struct PropagationPlan {
    steps: Vec<PlanStep>,
    input_dim: usize,
}

impl PropagationPlan {
    pub fn for_network(net: &Network) -> Self {
        let mut steps = Vec::new();
        for (idx, layer) in net.layers().iter().enumerate() {
            match layer {
                Layer::Dense { weights, bias } => steps.push(PlanStep::Affine {
                    weights: Mat {
                        rows: weights.shape()[0],
                        cols: weights.shape()[1],
                        data: weights.data().to_vec(),
                    },
                    bias: bias.clone(),
                }),
                Layer::Conv2d {
                    kernels,
                    bias,
                    stride,
                    padding,
                } => {
                    let ShapeState::Spatial { c, h, w } = net.states()[idx] else {
                        unreachable!("validated at construction");
                    };
                    steps.push(materialise_conv(kernels, bias, *stride, *padding, c, h, w));
                }
                Layer::Relu => steps.push(PlanStep::Relu),
                Layer::Flatten => {}
            }
        }
        Self {
            steps,
            input_dim: net.input_len(),
        }
    }

    /// Plan for an augmented network: the perturbation prefix is the first
    /// affine step, so propagation runs over the `m` strength variables.
    pub fn for_augmented(aug: &AugmentedNetwork) -> Self {
        let mut base = Self::for_network(aug.base());
        let w = aug.prefix_weights();
        let mut steps = vec![PlanStep::Affine {
            weights: Mat {
                rows: w.shape()[0],
                cols: w.shape()[1],
                data: w.data().to_vec(),
            },
            bias: aug.prefix_bias().to_vec(),
        }];
        steps.append(&mut base.steps);
        Self {
            steps,
            input_dim: aug.input_dim(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Sound concrete bounds per neuron via interval arithmetic.
    pub fn interval(&self, input: &InputBox) -> Result<Bounds, PropagateError> {
        self.run(input, false)
    }

    /// Bounds via affine forms with triangle-relaxed ReLUs; at least as tight
    /// as `interval` on every neuron.
    pub fn symbolic(&self, input: &InputBox) -> Result<Bounds, PropagateError> {
        self.run(input, true)
    }

    fn run(&self, input: &InputBox, symbolic: bool) -> Result<Bounds, PropagateError> {
        if input.dim() != self.input_dim {
            return Err(PropagateError::BoxDim {
                expected: self.input_dim,
                got: input.dim(),
            });
        }
        let n0 = input.dim();
        let mut forms = symbolic.then(|| AffineForms {
            lower_coef: Mat::identity(n0),
            lower_const: vec![0.0; n0],
            upper_coef: Mat::identity(n0),
            upper_const: vec![0.0; n0],
        });
        let mut lower = input.lower.clone();
        let mut upper = input.upper.clone();
        let mut layers = Vec::with_capacity(self.steps.len());

        for step in &self.steps {
            match step {
                PlanStep::Affine { weights, bias } => {
                    // Interval arithmetic from the previous concrete bounds.
                    let mut ilo = bias.clone();
                    let mut ihi = bias.clone();
                    for r in 0..weights.rows {
                        let row = weights.row(r);
                        let (mut lo, mut hi) = (0.0, 0.0);
                        for (j, &w) in row.iter().enumerate() {
                            if w >= 0.0 {
                                lo += w * lower[j];
                                hi += w * upper[j];
                            } else {
                                lo += w * upper[j];
                                hi += w * lower[j];
                            }
                        }
                        ilo[r] += lo;
                        ihi[r] += hi;
                    }

                    if let Some(f) = forms.as_mut() {
                        let next = f.affine(weights, bias);
                        let (slo, shi) = next.concretize(input);
                        // Intersect the concretised forms with the interval pass.
                        lower = slo
                            .iter()
                            .zip(&ilo)
                            .map(|(&a, &b)| a.max(b))
                            .collect();
                        upper = shi
                            .iter()
                            .zip(&ihi)
                            .map(|(&a, &b)| a.min(b))
                            .collect();
                        *f = next;
                    } else {
                        lower = ilo;
                        upper = ihi;
                    }
                }
                PlanStep::Relu => {
                    if let Some(f) = forms.as_mut() {
                        f.relu(&lower, &upper);
                    }
                    for v in lower.iter_mut() {
                        *v = v.max(0.0);
                    }
                    for v in upper.iter_mut() {
                        *v = v.max(0.0);
                    }
                }
            }
            layers.push(LayerBounds {
                lower: lower.clone(),
                upper: upper.clone(),
            });
        }
        Ok(Bounds {
            layers,
            output_forms: forms,
            input: input.clone(),
        })
    }
}

fn materialise_conv(
    kernels: &[crate::tensor::Tensor],
    bias: &[f64],
    stride: usize,
    padding: usize,
    c: usize,
    h: usize,
    w: usize,
) -> PlanStep {
    let (kh, kw) = (kernels[0].shape()[1], kernels[0].shape()[2]);
    let oh = (h + 2 * padding - kh) / stride + 1;
    let ow = (w + 2 * padding - kw) / stride + 1;
    let rows = kernels.len() * oh * ow;
    let mut weights = Mat::zeros(rows, c * h * w);
    let mut bvec = vec![0.0; rows];
    for (o, (kernel, &b)) in kernels.iter().zip(bias).enumerate() {
        for i in 0..oh {
            for j in 0..ow {
                let row = (o * oh + i) * ow + j;
                bvec[row] = b;
                let out_row = weights.row_mut(row);
                for ch in 0..c {
                    for k in 0..kh {
                        let Some(r) = (i * stride + k).checked_sub(padding) else {
                            continue;
                        };
                        if r >= h {
                            continue;
                        }
                        for l in 0..kw {
                            let Some(q) = (j * stride + l).checked_sub(padding) else {
                                continue;
                            };
                            if q >= w {
                                continue;
                            }
                            out_row[ch * h * w + r * w + q] += kernel.at3(ch, k, l);
                        }
                    }
                }
            }
        }
    }
    PlanStep::Affine {
        weights,
        bias: bvec,
    }
}

/// Affine lower/upper forms per neuron over the input variables.
#[derive(Debug, Clone)]
pub struct AffineForms {
    pub(crate) lower_coef: Mat,
    pub(crate) lower_const: Vec<f64>,
    pub(crate) upper_coef: Mat,
    pub(crate) upper_const: Vec<f64>,
}

impl AffineForms {
    /// Substitutes the forms through `y = W x + b`, choosing the lower or
    /// upper input form per weight sign.
    fn affine(&self, weights: &Mat, bias: &[f64]) -> AffineForms {
        let n0 = self.lower_coef.cols;
        let mut out = AffineForms {
            lower_coef: Mat::zeros(weights.rows, n0),
            lower_const: bias.to_vec(),
            upper_coef: Mat::zeros(weights.rows, n0),
            upper_const: bias.to_vec(),
        };
        for r in 0..weights.rows {
            let row = weights.row(r);
            let lo_row = out.lower_coef.row_mut(r);
            for (j, &w) in row.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let (coef, cst) = if w >= 0.0 {
                    (self.lower_coef.row(j), self.lower_const[j])
                } else {
                    (self.upper_coef.row(j), self.upper_const[j])
                };
                for (o, &c) in lo_row.iter_mut().zip(coef) {
                    *o += w * c;
                }
                out.lower_const[r] += w * cst;
            }
            let hi_row = out.upper_coef.row_mut(r);
            for (j, &w) in row.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let (coef, cst) = if w >= 0.0 {
                    (self.upper_coef.row(j), self.upper_const[j])
                } else {
                    (self.lower_coef.row(j), self.lower_const[j])
                };
                for (o, &c) in hi_row.iter_mut().zip(coef) {
                    *o += w * c;
                }
                out.upper_const[r] += w * cst;
            }
        }
        out
    }

    /// Applies the ReLU relaxation in place given concrete pre-activation
    /// bounds.
    fn relu(&mut self, lower: &[f64], upper: &[f64]) {
        for (i, (&l, &u)) in lower.iter().zip(upper).enumerate() {
            if u <= 0.0 {
                self.lower_coef.row_mut(i).fill(0.0);
                self.upper_coef.row_mut(i).fill(0.0);
                self.lower_const[i] = 0.0;
                self.upper_const[i] = 0.0;
            } else if l >= 0.0 {
                // stable active: forms pass through
            } else {
                let slope = u / (u - l);
                for v in self.upper_coef.row_mut(i) {
                    *v *= slope;
                }
                self.upper_const[i] = slope * self.upper_const[i] - slope * l;
                // smaller-area lower line: keep x when u >= |l|, else 0
                if u < -l {
                    self.lower_coef.row_mut(i).fill(0.0);
                    self.lower_const[i] = 0.0;
                }
            }
        }
    }

    /// Concrete bounds implied by the forms over `input`.
    pub fn concretize(&self, input: &InputBox) -> (Vec<f64>, Vec<f64>) {
        let lo = (0..self.lower_coef.rows)
            .map(|r| concretize_min(self.lower_coef.row(r), self.lower_const[r], input))
            .collect();
        let hi = (0..self.upper_coef.rows)
            .map(|r| concretize_max(self.upper_coef.row(r), self.upper_const[r], input))
            .collect();
        (lo, hi)
    }

    pub fn num_neurons(&self) -> usize {
        self.lower_coef.rows
    }
}

fn concretize_min(coef: &[f64], cst: f64, input: &InputBox) -> f64 {
    let mut acc = cst;
    for (j, &c) in coef.iter().enumerate() {
        acc += if c >= 0.0 {
            c * input.lower[j]
        } else {
            c * input.upper[j]
        };
    }
    acc
}

fn concretize_max(coef: &[f64], cst: f64, input: &InputBox) -> f64 {
    let mut acc = cst;
    for (j, &c) in coef.iter().enumerate() {
        acc += if c >= 0.0 {
            c * input.upper[j]
        } else {
            c * input.lower[j]
        };
    }
    acc
}

/// Concrete per-neuron bounds after each step.
#[derive(Debug, Clone)]
pub struct LayerBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Result of a propagation pass: concrete bounds per step, plus the output
/// layer's affine forms when produced symbolically.
#[derive(Debug, Clone)]
pub struct Bounds {
    layers: Vec<LayerBounds>,
    output_forms: Option<AffineForms>,
    input: InputBox,
}

impl Bounds {
    pub fn layers(&self) -> &[LayerBounds] {
        &self.layers
    }

    pub fn output(&self) -> &LayerBounds {
        self.layers.last().expect("plans have at least one step")
    }

    pub fn output_forms(&self) -> Option<&AffineForms> {
        self.output_forms.as_ref()
    }

    pub fn input(&self) -> &InputBox {
        &self.input
    }
}

/// Outcome of comparing output bounds against the robustness spec.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertifyOutcome {
    Certified,
    Unknown,
}

/// Certified iff the `label` logit strictly dominates every other logit:
/// via the lower bound of the symbolic difference `y[label] - y[j]` when
/// forms exist, intersected with the concrete bound difference.
pub fn check_output_spec(bounds: &Bounds, label: usize) -> CertifyOutcome {
    let out = bounds.output();
    let classes = out.lower.len();
    assert!(label < classes, "label {label} out of range for {classes} logits");
    for j in 0..classes {
        if j == label {
            continue;
        }
        let mut margin = out.lower[label] - out.upper[j];
        if let Some(forms) = bounds.output_forms() {
            let coef: Vec<f64> = forms
                .lower_coef
                .row(label)
                .iter()
                .zip(forms.upper_coef.row(j))
                .map(|(&a, &b)| a - b)
                .collect();
            let cst = forms.lower_const[label] - forms.upper_const[j];
            margin = margin.max(concretize_min(&coef, cst, bounds.input()));
        }
        if margin <= 0.0 {
            return CertifyOutcome::Unknown;
        }
    }
    CertifyOutcome::Certified
}

/// Interval bound propagation over a network (see [`PropagationPlan`] to
/// amortise plan construction across many boxes).
pub fn interval_propagate(net: &Network, input: &InputBox) -> Result<Bounds, PropagateError> {
    PropagationPlan::for_network(net).interval(input)
}

/// Symbolic bound propagation over a network.
pub fn symbolic_propagate(net: &Network, input: &InputBox) -> Result<Bounds, PropagateError> {
    PropagationPlan::for_network(net).symbolic(input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Layer;
    use crate::tensor::Tensor;
    use rand::prelude::*;
    use rand_chacha::ChaCha20Rng;

    fn dense_net(rows: &[Vec<f64>], bias: &[f64]) -> Network {
        Network::new(
            "t".into(),
            (1, 1, rows[0].len()),
            vec![Layer::Dense {
                weights: Tensor::from_rows(rows).unwrap(),
                bias: bias.to_vec(),
            }],
        )
        .unwrap()
    }

    #[test]
    fn interval_through_single_dense() {
        let net = dense_net(&[vec![1.0, -1.0]], &[0.0]);
        let bounds = interval_propagate(&net, &InputBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap())
            .unwrap();
        assert_eq!(bounds.output().lower, vec![-1.0]);
        assert_eq!(bounds.output().upper, vec![1.0]);
    }

    #[test]
    fn interval_relu_clamps() {
        let net = Network::new(
            "r".into(),
            (1, 1, 1),
            vec![
                Layer::Relu,
                Layer::Dense {
                    weights: Tensor::from_rows(&[vec![1.0]]).unwrap(),
                    bias: vec![0.0],
                },
            ],
        )
        .unwrap();
        let bounds =
            interval_propagate(&net, &InputBox::new(vec![-1.0], vec![1.0]).unwrap()).unwrap();
        assert_eq!(bounds.layers()[0].lower, vec![0.0]);
        assert_eq!(bounds.layers()[0].upper, vec![1.0]);
    }

    fn random_relu_net(rng: &mut ChaCha20Rng, inputs: usize, hidden: usize, outputs: usize) -> Network {
        let mut layer = |rows: usize, cols: usize| Layer::Dense {
            weights: Tensor::new(
                vec![rows, cols],
                (0..rows * cols).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect(),
            )
            .unwrap(),
            bias: (0..rows).map(|_| rng.gen::<f64>() - 0.5).collect(),
        };
        let l1 = layer(hidden, inputs);
        let l2 = layer(outputs, hidden);
        Network::new("rand".into(), (1, 1, inputs), vec![l1, Layer::Relu, l2]).unwrap()
    }

    #[test]
    fn monte_carlo_containment_for_both_passes() {
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        for _ in 0..5 {
            let net = random_relu_net(&mut rng, 3, 6, 2);
            let lo: Vec<f64> = (0..3).map(|_| rng.gen::<f64>() - 1.0).collect();
            let hi: Vec<f64> = lo.iter().map(|l| l + rng.gen::<f64>()).collect();
            let input = InputBox::new(lo.clone(), hi.clone()).unwrap();
            for bounds in [
                interval_propagate(&net, &input).unwrap(),
                symbolic_propagate(&net, &input).unwrap(),
            ] {
                for _ in 0..2000 {
                    let x: Vec<f64> = lo
                        .iter()
                        .zip(&hi)
                        .map(|(&l, &u)| l + rng.gen::<f64>() * (u - l))
                        .collect();
                    // Mirror the plan: dense, relu, dense.
                    let mut value = x.clone();
                    for (idx, layer) in net.layers().iter().enumerate() {
                        value = match layer {
                            Layer::Dense { weights, bias } => {
                                let cols = weights.shape()[1];
                                bias.iter()
                                    .enumerate()
                                    .map(|(r, &b)| {
                                        b + weights.data()[r * cols..(r + 1) * cols]
                                            .iter()
                                            .zip(&value)
                                            .map(|(&w, &v)| w * v)
                                            .sum::<f64>()
                                    })
                                    .collect()
                            }
                            Layer::Relu => value.iter().map(|v| v.max(0.0)).collect(),
                            _ => value,
                        };
                        let lb = &bounds.layers()[idx];
                        for (i, &v) in value.iter().enumerate() {
                            assert!(
                                v >= lb.lower[i] - 1e-9 && v <= lb.upper[i] + 1e-9,
                                "neuron {i} of layer {idx}: {v} outside [{}, {}]",
                                lb.lower[i],
                                lb.upper[i]
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn stable_active_relu_passes_forms_through() {
        let net = Network::new(
            "s".into(),
            (1, 1, 1),
            vec![
                Layer::Dense {
                    weights: Tensor::from_rows(&[vec![1.0]]).unwrap(),
                    bias: vec![2.0],
                },
                Layer::Relu,
                Layer::Dense {
                    weights: Tensor::from_rows(&[vec![1.0]]).unwrap(),
                    bias: vec![0.0],
                },
            ],
        )
        .unwrap();
        let input = InputBox::new(vec![-1.0], vec![1.0]).unwrap();
        let bounds = symbolic_propagate(&net, &input).unwrap();
        // Pre-activation is x + 2 in [1, 3], so bounds stay exact throughout.
        assert_eq!(bounds.output().lower, vec![1.0]);
        assert_eq!(bounds.output().upper, vec![3.0]);
    }

    #[test]
    fn triangle_upper_line_geometry() {
        // Single unstable ReLU over [-1, 1]: upper form must be (x + 1) / 2.
        let net = Network::new(
            "u".into(),
            (1, 1, 1),
            vec![
                Layer::Relu,
                Layer::Dense {
                    weights: Tensor::from_rows(&[vec![1.0]]).unwrap(),
                    bias: vec![0.0],
                },
            ],
        )
        .unwrap();
        let input = InputBox::new(vec![-1.0], vec![1.0]).unwrap();
        let bounds = symbolic_propagate(&net, &input).unwrap();
        let forms = bounds.output_forms().unwrap();
        assert!((forms.upper_coef.row(0)[0] - 0.5).abs() < 1e-15);
        assert!((forms.upper_const[0] - 0.5).abs() < 1e-15);
        // u >= |l| keeps the identity lower line; concrete lower clamps to 0.
        assert_eq!(forms.lower_coef.row(0)[0], 1.0);
        assert_eq!(bounds.output().lower[0], 0.0);
        assert_eq!(bounds.output().upper[0], 1.0);
    }

    #[test]
    fn symbolic_never_looser_than_interval() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for _ in 0..100 {
            let net = random_relu_net(&mut rng, 2, 8, 2);
            let lo: Vec<f64> = (0..2).map(|_| rng.gen::<f64>() - 1.0).collect();
            let hi: Vec<f64> = lo.iter().map(|l| l + rng.gen::<f64>() * 2.0).collect();
            let input = InputBox::new(lo, hi).unwrap();
            let iv = interval_propagate(&net, &input).unwrap();
            let sym = symbolic_propagate(&net, &input).unwrap();
            for (li, ls) in iv.layers().iter().zip(sym.layers()) {
                for i in 0..li.lower.len() {
                    assert!(ls.lower[i] >= li.lower[i] - 1e-9);
                    assert!(ls.upper[i] <= li.upper[i] + 1e-9);
                }
            }
        }
    }

    #[test]
    fn output_spec_certification_cases() {
        let net = dense_net(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[0.0, 0.0]);
        // logits: y0 in [2, 3], y1 in [0, 1]
        let b = interval_propagate(
            &net,
            &InputBox::new(vec![2.0, 0.0], vec![3.0, 1.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(check_output_spec(&b, 0), CertifyOutcome::Certified);
        // overlapping [0,2] vs [1,3]
        let b = interval_propagate(
            &net,
            &InputBox::new(vec![0.0, 1.0], vec![2.0, 3.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(check_output_spec(&b, 0), CertifyOutcome::Unknown);
        // boundary tie: lower(y0) == upper(y1) is not certified
        let b = interval_propagate(
            &net,
            &InputBox::new(vec![1.0, 0.0], vec![2.0, 1.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(check_output_spec(&b, 0), CertifyOutcome::Unknown);
    }

    #[test]
    fn symbolic_difference_beats_concrete_bounds() {
        // y0 = x, y1 = x: concrete bounds overlap but y0 - y1 = 0 symbolically;
        // with a positive bias on y0 the difference certifies.
        let net = dense_net(&[vec![1.0], vec![1.0]], &[0.1, 0.0]);
        let input = InputBox::new(vec![-5.0], vec![5.0]).unwrap();
        let sym = symbolic_propagate(&net, &input).unwrap();
        assert_eq!(check_output_spec(&sym, 0), CertifyOutcome::Certified);
        let iv = interval_propagate(&net, &input).unwrap();
        assert_eq!(check_output_spec(&iv, 0), CertifyOutcome::Unknown);
    }

    #[test]
    fn conv_plan_matches_forward() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let kernels = vec![
            Tensor::new(vec![1, 3, 3], (0..9).map(|_| rng.gen::<f64>() - 0.5).collect()).unwrap(),
            Tensor::new(vec![1, 3, 3], (0..9).map(|_| rng.gen::<f64>() - 0.5).collect()).unwrap(),
        ];
        let net = Network::new(
            "c".into(),
            (1, 4, 4),
            vec![
                Layer::Conv2d {
                    kernels,
                    bias: vec![0.3, -0.2],
                    stride: 1,
                    padding: 1,
                },
                Layer::Relu,
                Layer::Flatten,
                Layer::Dense {
                    weights: Tensor::new(
                        vec![2, 32],
                        (0..64).map(|_| rng.gen::<f64>() - 0.5).collect(),
                    )
                    .unwrap(),
                    bias: vec![0.0, 0.0],
                },
            ],
        )
        .unwrap();
        let x: Vec<f64> = (0..16).map(|_| rng.gen::<f64>()).collect();
        let point = InputBox::new(x.clone(), x.clone()).unwrap();
        let bounds = symbolic_propagate(&net, &point).unwrap();
        let direct = net.forward_flat(&x).unwrap();
        for (i, &v) in direct.iter().enumerate() {
            assert!((bounds.output().lower[i] - v).abs() < 1e-9);
            assert!((bounds.output().upper[i] - v).abs() < 1e-9);
        }
    }

    #[test]
    fn box_dimension_mismatch_is_reported() {
        let net = dense_net(&[vec![1.0, 0.0]], &[0.0]);
        let err =
            interval_propagate(&net, &InputBox::new(vec![0.0], vec![1.0]).unwrap()).unwrap_err();
        assert_eq!(err, PropagateError::BoxDim { expected: 2, got: 1 });
    }
}
