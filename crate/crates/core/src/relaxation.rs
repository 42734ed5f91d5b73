//! The backward relaxation phase.
//!
//! After a forward sweep the output layer is clamped to the prediction error
//! `g^L = x^L − T` and every hidden layer evolves as a leaky integrator driven
//! by the layer above:
//!
//! ```text
//! g^l ← g^l + η_x (−g^l + B^l(g^{l+1}))
//! ```
//!
//! where the backward map `B^l` depends on the variant:
//!
//! | variant           | `B^l(v)`                          |
//! |-------------------|-----------------------------------|
//! | `Exact`           | `W^lᵀ (v ⊙ f'(W^l x^l))`          |
//! | `FixedFeedback`   | `ψ^l (v ⊙ f'(W^l x^l))`           |
//! | `LearnedFeedback` | `ψ^l (v ⊙ f'(W^l x^l))`           |
//! | `NoDerivative`    | `W^lᵀ v`                          |
//! | `Combined`        | `ψ^l v`                           |
//!
//! Jacobians are frozen at the forward-pass values, so for `Exact` the unique
//! fixed point is `g^l = ∂L/∂x^l`. The input layer `g^0` is never updated.

use crate::error::{ArError, Result};
use crate::math::{matvec, matvec_transposed, outer, Matrix, Vector};
use crate::network::{ForwardTrace, NetworkParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Exact,
    FixedFeedback,
    LearnedFeedback,
    NoDerivative,
    Combined,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Exact,
        Variant::FixedFeedback,
        Variant::LearnedFeedback,
        Variant::NoDerivative,
        Variant::Combined,
    ];

    /// Whether the backward map reads `ψ` instead of `Wᵀ`.
    pub fn uses_feedback(self) -> bool {
        matches!(
            self,
            Variant::FixedFeedback | Variant::LearnedFeedback | Variant::Combined
        )
    }

    /// Whether `ψ` is trained by the Hebbian rule.
    pub fn learns_feedback(self) -> bool {
        matches!(self, Variant::LearnedFeedback | Variant::Combined)
    }

    /// Whether activation derivatives gate the backward signal and weight update.
    pub fn uses_derivative(self) -> bool {
        !matches!(self, Variant::NoDerivative | Variant::Combined)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Exact => "exact",
            Variant::FixedFeedback => "fixed-feedback",
            Variant::LearnedFeedback => "learned-feedback",
            Variant::NoDerivative => "no-derivative",
            Variant::Combined => "combined",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = ArError;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| ArError::Config(format!("unknown variant '{s}'")))
    }
}

/// Order in which layers consume their neighbours' values within one step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Schedule {
    /// All layers read the pre-step values.
    Jacobi,
    /// Top-down: layer `l` reads the already-updated `g^{l+1}`.
    GaussSeidel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VariantConfig {
    pub mode: Variant,
    pub eta_x: f64,
    pub eta_theta: f64,
    pub eta_psi: f64,
    pub iters: usize,
    /// Stop early once every layer's largest per-step change is below this.
    /// Zero runs all `iters` steps.
    pub tol: f64,
    pub schedule: Schedule,
}

impl Default for VariantConfig {
    fn default() -> Self {
        Self {
            mode: Variant::Exact,
            eta_x: 0.1,
            eta_theta: 0.001,
            eta_psi: 0.0001,
            iters: 100,
            tol: 0.0,
            schedule: Schedule::Jacobi,
        }
    }
}

impl VariantConfig {
    pub fn with_mode(mode: Variant) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta_x > 0.0 && self.eta_x <= 1.0) {
            return Err(ArError::Config(format!(
                "eta_x must lie in (0, 1], got {}",
                self.eta_x
            )));
        }
        if self.iters == 0 {
            return Err(ArError::Config(
                "relaxation needs at least one iteration".into(),
            ));
        }
        for (name, v) in [("eta_theta", self.eta_theta), ("eta_psi", self.eta_psi)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ArError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.tol.is_finite() && self.tol >= 0.0) {
            return Err(ArError::Config(format!(
                "tol must be non-negative, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

/// Values of every layer during relaxation. `g[L]` is clamped.
#[derive(Clone, Debug, PartialEq)]
pub struct RelaxationState {
    pub g: Vec<Vector>,
    pub iteration: usize,
}

impl RelaxationState {
    pub fn depth(&self) -> usize {
        self.g.len() - 1
    }
}

/// Equilibrated layer values and the weight gradients built from them.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientEstimate {
    /// `activation_grads[k]` is `g^{k+1}`, i.e. layers `1..=L`.
    pub activation_grads: Vec<Vector>,
    pub weight_grads: Vec<Matrix>,
    /// Relaxation steps actually taken.
    pub iterations: usize,
}

impl GradientEstimate {
    /// Equilibrium value of activation layer `l` (`1..=L`).
    pub fn layer(&self, l: usize) -> &Vector {
        &self.activation_grads[l - 1]
    }
}

pub fn init_relaxation(trace: &ForwardTrace, target: &Vector) -> Result<RelaxationState> {
    let out = trace.output();
    if out.dim() != target.dim() {
        return Err(ArError::shape(
            "init_relaxation",
            format!("output dim {}", out.dim()),
            format!("target dim {}", target.dim()),
        ));
    }
    let mut g = trace.activations.clone();
    let last = g.len() - 1;
    g[last] = out.sub(target)?;
    Ok(RelaxationState { g, iteration: 0 })
}

/// Per-layer quantities that stay fixed for the whole relaxation.
pub(crate) struct FrozenJacobians<'a> {
    params: &'a NetworkParams,
    mode: Variant,
    /// `f'(W^l x^l)`; empty vectors when the variant drops derivatives.
    derivs: Vec<Vector>,
}

impl<'a> FrozenJacobians<'a> {
    pub(crate) fn new(
        trace: &ForwardTrace,
        params: &'a NetworkParams,
        mode: Variant,
    ) -> Result<Self> {
        if trace.depth() != params.depth() {
            return Err(ArError::shape(
                "relaxation",
                format!("trace depth {}", trace.depth()),
                format!("network depth {}", params.depth()),
            ));
        }
        if mode.uses_feedback() && params.feedback().is_none() {
            return Err(ArError::Config(format!(
                "variant {} needs feedback weights but the network has none",
                mode.name()
            )));
        }
        let derivs = if mode.uses_derivative() {
            params
                .layers()
                .iter()
                .zip(&trace.preactivations)
                .map(|(s, pre)| s.activation.derivative(pre))
                .collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            params,
            mode,
            derivs,
        })
    }

    /// Signal arriving at layer `l` from layer `l + 1` holding `upper`.
    pub(crate) fn backward(&self, l: usize, upper: &Vector) -> Result<Vector> {
        let gated;
        let v = if self.mode.uses_derivative() {
            gated = upper.hadamard(&self.derivs[l])?;
            &gated
        } else {
            upper
        };
        if self.mode.uses_feedback() {
            let psi = &self.params.feedback().expect("checked in new")[l];
            matvec(psi, v)
        } else {
            matvec_transposed(&self.params.weights()[l], v)
        }
    }

    /// Error signal `δ^l` whose outer product with `x^l` is the weight gradient.
    pub(crate) fn delta(&self, l: usize, upper: &Vector) -> Result<Vector> {
        if self.mode.uses_derivative() {
            upper.hadamard(&self.derivs[l])
        } else {
            Ok(upper.clone())
        }
    }
}

/// `g + η(−g + drive)`.
pub(crate) fn leaky_update(g: &Vector, drive: &Vector, eta: f64) -> Vector {
    Vector::new(
        g.iter()
            .zip(drive.iter())
            .map(|(&gi, &di)| gi + eta * (-gi + di))
            .collect(),
    )
}

fn check_shapes(state: &RelaxationState, params: &NetworkParams) -> Result<()> {
    if state.g.len() != params.depth() + 1 {
        return Err(ArError::shape(
            "relax_step",
            format!("{} state layers", state.g.len()),
            format!("{} network layers", params.depth() + 1),
        ));
    }
    for (l, g) in state.g.iter().enumerate() {
        if g.dim() != params.width(l) {
            return Err(ArError::shape(
                "relax_step",
                format!("layer {l} state dim {}", g.dim()),
                format!("width {}", params.width(l)),
            ));
        }
    }
    Ok(())
}

/// One step in place; returns the largest absolute change of any entry.
fn step_in_place(
    state: &mut RelaxationState,
    jac: &FrozenJacobians<'_>,
    cfg: &VariantConfig,
) -> Result<f64> {
    let depth = state.depth();
    let iteration = state.iteration + 1;
    let mut max_change: f64 = 0.0;
    match cfg.schedule {
        Schedule::Jacobi => {
            let mut updated = Vec::with_capacity(depth.saturating_sub(1));
            for l in (1..depth).rev() {
                let drive = jac.backward(l, &state.g[l + 1])?;
                updated.push((l, leaky_update(&state.g[l], &drive, cfg.eta_x)));
            }
            for (l, new) in updated {
                max_change = max_change.max(finite_change(&state.g[l], &new, l, iteration)?);
                state.g[l] = new;
            }
        }
        Schedule::GaussSeidel => {
            for l in (1..depth).rev() {
                let drive = jac.backward(l, &state.g[l + 1])?;
                let new = leaky_update(&state.g[l], &drive, cfg.eta_x);
                max_change = max_change.max(finite_change(&state.g[l], &new, l, iteration)?);
                state.g[l] = new;
            }
        }
    }
    state.iteration = iteration;
    Ok(max_change)
}

fn finite_change(old: &Vector, new: &Vector, layer: usize, iteration: usize) -> Result<f64> {
    if !new.is_finite() {
        return Err(ArError::Divergence { layer, iteration });
    }
    Ok(old
        .iter()
        .zip(new.iter())
        .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
}

/// One relaxation step. The trace and parameters are read only.
pub fn relax_step(
    state: &RelaxationState,
    trace: &ForwardTrace,
    params: &NetworkParams,
    cfg: &VariantConfig,
) -> Result<RelaxationState> {
    check_shapes(state, params)?;
    let jac = FrozenJacobians::new(trace, params, cfg.mode)?;
    let mut next = state.clone();
    step_in_place(&mut next, &jac, cfg)?;
    Ok(next)
}

/// Runs the relaxation to completion and forms the weight gradients.
pub fn relax(
    trace: &ForwardTrace,
    params: &NetworkParams,
    target: &Vector,
    cfg: &VariantConfig,
) -> Result<GradientEstimate> {
    relax_observed(trace, params, target, cfg, |_| {})
}

/// As [`relax`], calling `observe` with the initial state and after every step.
pub fn relax_observed(
    trace: &ForwardTrace,
    params: &NetworkParams,
    target: &Vector,
    cfg: &VariantConfig,
    mut observe: impl FnMut(&RelaxationState),
) -> Result<GradientEstimate> {
    let (state, jac) = run_relaxation(trace, params, target, cfg, &mut observe)?;
    let weight_grads = (0..params.depth())
        .map(|l| {
            Ok(outer(
                &jac.delta(l, &state.g[l + 1])?,
                &trace.activations[l],
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GradientEstimate {
        iterations: state.iteration,
        activation_grads: state.g.into_iter().skip(1).collect(),
        weight_grads,
    })
}

fn run_relaxation<'a>(
    trace: &ForwardTrace,
    params: &'a NetworkParams,
    target: &Vector,
    cfg: &VariantConfig,
    observe: &mut impl FnMut(&RelaxationState),
) -> Result<(RelaxationState, FrozenJacobians<'a>)> {
    cfg.validate()?;
    let jac = FrozenJacobians::new(trace, params, cfg.mode)?;
    let mut state = init_relaxation(trace, target)?;
    check_shapes(&state, params)?;
    observe(&state);
    for _ in 0..cfg.iters {
        let change = step_in_place(&mut state, &jac, cfg)?;
        observe(&state);
        if cfg.tol > 0.0 && change < cfg.tol {
            break;
        }
    }
    Ok((state, jac))
}

/// Relaxes and returns only the per-layer error signals `δ^l` (`l` in
/// `0..L`); the weight gradient of layer `l` is `δ^l ⊗ x^l`. Cheaper than
/// [`relax`] when gradients are accumulated over a minibatch.
pub fn relax_deltas(
    trace: &ForwardTrace,
    params: &NetworkParams,
    target: &Vector,
    cfg: &VariantConfig,
) -> Result<Vec<Vector>> {
    let (state, jac) = run_relaxation(trace, params, target, cfg, &mut |_| {})?;
    (0..params.depth())
        .map(|l| jac.delta(l, &state.g[l + 1]))
        .collect()
}

/// Plain SGD: `W^l ← W^l − η_θ ∇W^l`. Feedback weights are untouched.
pub fn update_weights(
    params: &NetworkParams,
    estimate: &GradientEstimate,
    cfg: &VariantConfig,
) -> Result<NetworkParams> {
    let mut next = params.clone();
    apply_weight_gradients(&mut next, &estimate.weight_grads, cfg.eta_theta)?;
    Ok(next)
}

/// In-place form of [`update_weights`]; errors on the first non-finite weight.
pub fn apply_weight_gradients(
    params: &mut NetworkParams,
    grads: &[Matrix],
    eta_theta: f64,
) -> Result<()> {
    if grads.len() != params.depth() {
        return Err(ArError::shape(
            "update_weights",
            format!("{} weight matrices", params.depth()),
            format!("{} gradients", grads.len()),
        ));
    }
    for (w, g) in params.weights().iter().zip(grads) {
        if w.shape() != g.shape() {
            return Err(ArError::shape("update_weights", w.shape(), g.shape()));
        }
    }
    for (l, (w, g)) in params.weights_mut().iter_mut().zip(grads).enumerate() {
        w.axpy(-eta_theta, g)?;
        if !w.is_finite() {
            return Err(ArError::Divergence {
                layer: l,
                iteration: 0,
            });
        }
    }
    Ok(())
}

/// Hebbian feedback learning:
/// `ψ^l ← ψ^l + η_ψ · mean_items x^l ⊗ (f'(W^l x^l) ⊙ x^{l+1})`,
/// using forward-pass activations.
pub fn update_feedback_weights(
    params: &NetworkParams,
    traces: &[ForwardTrace],
    cfg: &VariantConfig,
) -> Result<NetworkParams> {
    let mut next = params.clone();
    apply_feedback_update(&mut next, traces, cfg.eta_psi)?;
    Ok(next)
}

pub fn apply_feedback_update(
    params: &mut NetworkParams,
    traces: &[ForwardTrace],
    eta_psi: f64,
) -> Result<()> {
    if params.feedback().is_none() {
        return Err(ArError::Config(
            "feedback update requested but the network has no feedback weights".into(),
        ));
    }
    if traces.is_empty() {
        return Ok(());
    }
    let scale = eta_psi / traces.len() as f64;
    let layers = params.layers().to_vec();
    let mut increments: Vec<Matrix> = layers
        .iter()
        .map(|s| Matrix::zeros(s.in_dim, s.out_dim))
        .collect();
    for trace in traces {
        if trace.depth() != layers.len() {
            return Err(ArError::shape(
                "update_feedback_weights",
                format!("trace depth {}", trace.depth()),
                format!("network depth {}", layers.len()),
            ));
        }
        for (l, spec) in layers.iter().enumerate() {
            let post = spec
                .activation
                .derivative(&trace.preactivations[l])
                .hadamard(&trace.activations[l + 1])?;
            increments[l].add_outer(1.0, &trace.activations[l], &post)?;
        }
    }
    let feedback = params.feedback_mut().expect("checked above");
    for (l, (psi, inc)) in feedback.iter_mut().zip(&increments).enumerate() {
        psi.axpy(scale, inc)?;
        if !psi.is_finite() {
            return Err(ArError::Divergence {
                layer: l,
                iteration: 0,
            });
        }
    }
    Ok(())
}

/// Angle in degrees between `ψ^l` and `W^lᵀ` (Frobenius inner product).
pub fn alignment_angle(params: &NetworkParams, l: usize) -> Result<f64> {
    let psi = params
        .feedback()
        .ok_or_else(|| ArError::Config("network has no feedback weights".into()))?
        .get(l)
        .ok_or_else(|| ArError::Config(format!("no layer {l}")))?;
    let wt = params.weights()[l].transpose();
    let denom = psi.frobenius_norm() * wt.frobenius_norm();
    if denom == 0.0 {
        return Ok(90.0);
    }
    let cos = (psi.frobenius_dot(&wt)? / denom).clamp(-1.0, 1.0);
    Ok(cos.acos().to_degrees())
}
