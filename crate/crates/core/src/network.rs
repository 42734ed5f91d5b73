//! Bias-free multilayer perceptrons: `x^{l+1} = f(W^l x^l)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{ArError, Result};
use crate::math::{matvec, relu, relu_prime, Matrix, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    pub fn apply(self, pre: &Vector) -> Vector {
        match self {
            Activation::Relu => relu(pre),
            Activation::Linear => pre.clone(),
        }
    }

    pub fn derivative(self, pre: &Vector) -> Vector {
        match self {
            Activation::Relu => relu_prime(pre),
            Activation::Linear => Vector::filled(pre.dim(), 1.0),
        }
    }

    /// Tag byte used by the checkpoint format.
    pub fn tag(self) -> u8 {
        match self {
            Activation::Linear => 0,
            Activation::Relu => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Linear),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            activation,
        }
    }
}

/// Builds layer specs from a width list such as `[784, 300, 300, 100, 10]`:
/// ReLU hidden layers and a linear output layer.
pub fn mlp_specs(widths: &[usize]) -> Result<Vec<LayerSpec>> {
    if widths.len() < 2 {
        return Err(ArError::Config(format!(
            "architecture needs at least an input and an output width, got {widths:?}"
        )));
    }
    let last = widths.len() - 2;
    let specs: Vec<_> = widths
        .windows(2)
        .enumerate()
        .map(|(l, w)| {
            let act = if l == last {
                Activation::Linear
            } else {
                Activation::Relu
            };
            LayerSpec::new(w[0], w[1], act)
        })
        .collect();
    validate_chain(&specs)?;
    Ok(specs)
}

fn validate_chain(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(ArError::Config("network has no layers".into()));
    }
    for (l, s) in specs.iter().enumerate() {
        if s.in_dim == 0 || s.out_dim == 0 {
            return Err(ArError::Config(format!("layer {l} has a zero dimension")));
        }
    }
    for (l, pair) in specs.windows(2).enumerate() {
        if pair[0].out_dim != pair[1].in_dim {
            return Err(ArError::Config(format!(
                "layer {l} outputs {} but layer {} expects {}",
                pair[0].out_dim,
                l + 1,
                pair[1].in_dim
            )));
        }
    }
    Ok(())
}

/// Whether to allocate separate feedback (backward) weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeedbackInit {
    None,
    Random,
}

/// Forward weights `W^l` (shape `out × in`) and optional feedback weights
/// `ψ^l` (shape `in × out`, i.e. the shape of `W^lᵀ`).
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    layers: Vec<LayerSpec>,
    weights: Vec<Matrix>,
    feedback: Option<Vec<Matrix>>,
}

impl NetworkParams {
    pub fn new(
        layers: Vec<LayerSpec>,
        weights: Vec<Matrix>,
        feedback: Option<Vec<Matrix>>,
    ) -> Result<Self> {
        validate_chain(&layers)?;
        if weights.len() != layers.len() {
            return Err(ArError::Config(format!(
                "{} layers but {} weight matrices",
                layers.len(),
                weights.len()
            )));
        }
        for (l, (s, w)) in layers.iter().zip(&weights).enumerate() {
            if w.rows() != s.out_dim || w.cols() != s.in_dim {
                return Err(ArError::Config(format!(
                    "weight {l} has shape {} but layer is {}->{}",
                    w.shape(),
                    s.in_dim,
                    s.out_dim
                )));
            }
        }
        if let Some(fb) = &feedback {
            if fb.len() != layers.len() {
                return Err(ArError::Config(format!(
                    "{} layers but {} feedback matrices",
                    layers.len(),
                    fb.len()
                )));
            }
            for (l, (s, p)) in layers.iter().zip(fb).enumerate() {
                if p.rows() != s.in_dim || p.cols() != s.out_dim {
                    return Err(ArError::Config(format!(
                        "feedback {l} has shape {} but must be {}x{}",
                        p.shape(),
                        s.in_dim,
                        s.out_dim
                    )));
                }
            }
        }
        Ok(Self {
            layers,
            weights,
            feedback,
        })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// Number of weight layers `L`.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    /// Width of activation layer `l`, for `l` in `0..=L`.
    pub fn width(&self, l: usize) -> usize {
        if l == 0 {
            self.layers[0].in_dim
        } else {
            self.layers[l - 1].out_dim
        }
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn feedback(&self) -> Option<&[Matrix]> {
        self.feedback.as_deref()
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [Matrix] {
        &mut self.weights
    }

    pub(crate) fn feedback_mut(&mut self) -> Option<&mut [Matrix]> {
        self.feedback.as_deref_mut()
    }

    pub fn with_feedback(self, feedback: Option<Vec<Matrix>>) -> Result<Self> {
        NetworkParams::new(self.layers, self.weights, feedback)
    }

    pub fn widths(&self) -> Vec<usize> {
        (0..=self.depth()).map(|l| self.width(l)).collect()
    }
}

/// Gaussian initialization with std `1/sqrt(fan_in)` for forward weights and
/// `1/sqrt(out_dim)` for feedback weights.
pub fn init_params(
    specs: &[LayerSpec],
    seed: u64,
    feedback: FeedbackInit,
) -> Result<NetworkParams> {
    init_params_scaled(specs, seed, feedback, 1.0)
}

/// As [`init_params`] with every standard deviation multiplied by `gain`.
///
/// Forward weights are drawn first so that the same seed yields the same
/// forward weights with or without feedback.
pub fn init_params_scaled(
    specs: &[LayerSpec],
    seed: u64,
    feedback: FeedbackInit,
    gain: f64,
) -> Result<NetworkParams> {
    validate_chain(specs)?;
    if !(gain.is_finite() && gain > 0.0) {
        return Err(ArError::Config(format!(
            "init gain must be positive, got {gain}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaussian = |rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64| {
        let normal = Normal::new(0.0, std).expect("std is positive and finite");
        let data = (0..rows * cols).map(|_| normal.sample(rng)).collect();
        Matrix::from_vec(rows, cols, data).expect("length matches shape")
    };
    let weights: Vec<Matrix> = specs
        .iter()
        .map(|s| {
            gaussian(
                &mut rng,
                s.out_dim,
                s.in_dim,
                gain / (s.in_dim as f64).sqrt(),
            )
        })
        .collect();
    let feedback = match feedback {
        FeedbackInit::None => None,
        FeedbackInit::Random => Some(
            specs
                .iter()
                .map(|s| {
                    gaussian(
                        &mut rng,
                        s.in_dim,
                        s.out_dim,
                        gain / (s.out_dim as f64).sqrt(),
                    )
                })
                .collect(),
        ),
    };
    NetworkParams::new(specs.to_vec(), weights, feedback)
}

/// Frozen values of one feedforward sweep.
///
/// `activations[l]` is `x^l` for `l` in `0..=L`; `preactivations[l]` is
/// `W^l x^l` for `l` in `0..L`.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub activations: Vec<Vector>,
    pub preactivations: Vec<Vector>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Vector {
        self.activations
            .last()
            .expect("trace always holds the input")
    }

    pub fn depth(&self) -> usize {
        self.preactivations.len()
    }
}

pub fn forward(params: &NetworkParams, input: &Vector) -> Result<ForwardTrace> {
    if input.dim() != params.input_dim() {
        return Err(ArError::shape(
            "forward",
            format!("network input dim {}", params.input_dim()),
            format!("vector of dim {}", input.dim()),
        ));
    }
    let mut activations = Vec::with_capacity(params.depth() + 1);
    let mut preactivations = Vec::with_capacity(params.depth());
    activations.push(input.clone());
    for (spec, w) in params.layers.iter().zip(&params.weights) {
        let pre = matvec(w, activations.last().expect("non-empty"))?;
        activations.push(spec.activation.apply(&pre));
        preactivations.push(pre);
    }
    Ok(ForwardTrace {
        activations,
        preactivations,
    })
}

/// Index of the largest network output, lowest index on ties.
pub fn predict_class(params: &NetworkParams, input: &Vector) -> Result<usize> {
    let trace = forward(params, input)?;
    Ok(trace
        .output()
        .argmax()
        .expect("output layer has at least one unit"))
}
