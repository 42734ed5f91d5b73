//! Minibatch training, evaluation, and the metrics CSV.
//!
//! A minibatch is processed as one matrix per layer with one column per
//! item. The relaxation is run on all columns at once; each column follows
//! exactly the per-item dynamics of [`crate::relaxation`].

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::data::{batches, BatchPlan, Dataset};
use crate::error::{ArError, Result};
use crate::math::{Matrix, Vector};
use crate::network::{init_params, Activation, FeedbackInit, LayerSpec, NetworkParams};
use crate::relaxation::{apply_weight_gradients, Schedule, Variant, VariantConfig};

/// How weight gradients are produced during training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TrainVariant {
    Relax(Variant),
    /// Exact reverse-mode gradients; the parity baseline.
    BackpropOracle,
}

impl TrainVariant {
    pub fn name(self) -> &'static str {
        match self {
            TrainVariant::Relax(v) => v.name(),
            TrainVariant::BackpropOracle => "backprop-oracle",
        }
    }

    pub fn uses_feedback(self) -> bool {
        matches!(self, TrainVariant::Relax(v) if v.uses_feedback())
    }
}

impl std::str::FromStr for TrainVariant {
    type Err = ArError;
    fn from_str(s: &str) -> Result<Self> {
        if s == "backprop-oracle" {
            Ok(TrainVariant::BackpropOracle)
        } else {
            s.parse().map(TrainVariant::Relax)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub variant: TrainVariant,
    /// Relaxation and learning rates; `relax.mode` is ignored in favour of `variant`.
    pub relax: VariantConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Also compute the exact gradients each minibatch and record the mean
    /// squared gap over hidden layers.
    pub sample_gradients: bool,
    pub feedback_rule: FeedbackRule,
}

/// Which activity the feedback-weight update correlates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum FeedbackRule {
    /// `ψ^l += η_ψ · mean x^l ⊗ (f'(W^l x^l) ⊙ x^{l+1})` on forward activations.
    #[default]
    Forward,
    /// `ψ^l −= η_ψ · mean x^l ⊗ δ^l` with the relaxed error signal `δ^l`
    /// of the weight update, i.e. `ψ^l` receives the transposed weight step.
    Relaxed,
}

impl std::str::FromStr for FeedbackRule {
    type Err = ArError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forward" => Ok(Self::Forward),
            "relaxed" => Ok(Self::Relaxed),
            _ => Err(ArError::Config(format!(
                "unknown feedback rule '{s}' (expected forward or relaxed)"
            ))),
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: TrainVariant::Relax(Variant::Exact),
            relax: VariantConfig::default(),
            epochs: 10,
            batch_size: 64,
            seed: 0,
            sample_gradients: false,
            feedback_rule: FeedbackRule::Forward,
        }
    }
}

impl TrainConfig {
    fn relax_config(&self) -> Option<VariantConfig> {
        match self.variant {
            TrainVariant::Relax(mode) => Some(VariantConfig {
                mode,
                ..self.relax.clone()
            }),
            TrainVariant::BackpropOracle => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(ArError::Config("batch size must be positive".into()));
        }
        self.relax.validate()
    }
}

/// Initial parameters for a run: feedback weights are drawn only for
/// variants that read them, after the forward weights.
pub fn init_for(specs: &[LayerSpec], seed: u64, variant: TrainVariant) -> Result<NetworkParams> {
    let fb = if variant.uses_feedback() {
        FeedbackInit::Random
    } else {
        FeedbackInit::None
    };
    init_params(specs, seed, fb)
}

fn to_dmatrix(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

fn from_dmatrix(m: &DMatrix<f64>) -> Matrix {
    Matrix::from_vec(m.nrows(), m.ncols(), m.transpose().as_slice().to_vec())
        .expect("length matches")
}

fn stack(columns: &[&Vector]) -> DMatrix<f64> {
    let dim = columns.first().map_or(0, |c| c.dim());
    DMatrix::from_fn(dim, columns.len(), |i, b| columns[b][i])
}

fn activate(a: Activation, pre: &DMatrix<f64>) -> DMatrix<f64> {
    match a {
        Activation::Linear => pre.clone(),
        Activation::Relu => pre.map(|v| v.max(0.0)),
    }
}

fn derivative(a: Activation, pre: &DMatrix<f64>) -> DMatrix<f64> {
    match a {
        Activation::Linear => DMatrix::from_element(pre.nrows(), pre.ncols(), 1.0),
        Activation::Relu => pre.map(|v| if v > 0.0 { 1.0 } else { 0.0 }),
    }
}

/// Forward values of a stacked minibatch.
struct BatchTrace {
    acts: Vec<DMatrix<f64>>,
    pres: Vec<DMatrix<f64>>,
}

struct DenseParams {
    specs: Vec<LayerSpec>,
    weights: Vec<DMatrix<f64>>,
    weights_t: Vec<DMatrix<f64>>,
    feedback: Option<Vec<DMatrix<f64>>>,
}

impl DenseParams {
    fn new(params: &NetworkParams) -> Self {
        let weights: Vec<_> = params.weights().iter().map(to_dmatrix).collect();
        Self {
            specs: params.layers().to_vec(),
            weights_t: weights.iter().map(|w| w.transpose()).collect(),
            weights,
            feedback: params
                .feedback()
                .map(|fb| fb.iter().map(to_dmatrix).collect()),
        }
    }

    fn forward(&self, x: DMatrix<f64>) -> BatchTrace {
        let mut acts = vec![x];
        let mut pres = Vec::with_capacity(self.specs.len());
        for (spec, w) in self.specs.iter().zip(&self.weights) {
            let pre = w * acts.last().expect("input present");
            acts.push(activate(spec.activation, &pre));
            pres.push(pre);
        }
        BatchTrace { acts, pres }
    }

    fn derivs(&self, trace: &BatchTrace) -> Vec<DMatrix<f64>> {
        self.specs
            .iter()
            .zip(&trace.pres)
            .map(|(s, p)| derivative(s.activation, p))
            .collect()
    }
}

/// Exact per-column gradients `∂L/∂x^l` for `l` in `0..=L` (index 0 left empty).
fn backprop_batch(
    dense: &DenseParams,
    trace: &BatchTrace,
    derivs: &[DMatrix<f64>],
    target: &DMatrix<f64>,
) -> Vec<DMatrix<f64>> {
    let depth = dense.specs.len();
    let mut g = vec![DMatrix::zeros(0, 0); depth + 1];
    g[depth] = &trace.acts[depth] - target;
    for l in (1..depth).rev() {
        g[l] = &dense.weights_t[l] * g[l + 1].component_mul(&derivs[l]);
    }
    g
}

/// Relaxed values of every layer (`g[0]` is the forward input, untouched).
fn relax_batch(
    dense: &DenseParams,
    trace: &BatchTrace,
    derivs: &[DMatrix<f64>],
    target: &DMatrix<f64>,
    cfg: &VariantConfig,
) -> Result<Vec<DMatrix<f64>>> {
    let depth = dense.specs.len();
    let feedback = if cfg.mode.uses_feedback() {
        Some(dense.feedback.as_ref().ok_or_else(|| {
            ArError::Config(format!(
                "variant {} needs feedback weights but the network has none",
                cfg.mode.name()
            ))
        })?)
    } else {
        None
    };
    let backward = |l: usize, upper: &DMatrix<f64>| -> DMatrix<f64> {
        let gated;
        let v = if cfg.mode.uses_derivative() {
            gated = upper.component_mul(&derivs[l]);
            &gated
        } else {
            upper
        };
        match feedback {
            Some(psi) => &psi[l] * v,
            None => &dense.weights_t[l] * v,
        }
    };
    let leaky = |g: &mut DMatrix<f64>, drive: &DMatrix<f64>, l: usize, it: usize| -> Result<f64> {
        let mut change: f64 = 0.0;
        for (gi, &di) in g.iter_mut().zip(drive.iter()) {
            let new = *gi + cfg.eta_x * (-*gi + di);
            if !new.is_finite() {
                return Err(ArError::Divergence {
                    layer: l,
                    iteration: it,
                });
            }
            change = change.max((new - *gi).abs());
            *gi = new;
        }
        Ok(change)
    };

    let mut g = trace.acts.clone();
    g[depth] = &trace.acts[depth] - target;
    for it in 1..=cfg.iters {
        let mut change: f64 = 0.0;
        match cfg.schedule {
            Schedule::Jacobi => {
                let drives: Vec<(usize, DMatrix<f64>)> = (1..depth)
                    .rev()
                    .map(|l| (l, backward(l, &g[l + 1])))
                    .collect();
                for (l, d) in drives {
                    change = change.max(leaky(&mut g[l], &d, l, it)?);
                }
            }
            Schedule::GaussSeidel => {
                for l in (1..depth).rev() {
                    let d = backward(l, &g[l + 1]);
                    change = change.max(leaky(&mut g[l], &d, l, it)?);
                }
            }
        }
        if cfg.tol > 0.0 && change < cfg.tol {
            break;
        }
    }
    Ok(g)
}

/// Summary of one processed minibatch.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    /// Mean of `½‖y − t‖²` before the update.
    pub loss: f64,
    pub correct: usize,
    pub count: usize,
    /// Mean over hidden layers of the per-entry squared gap to the exact gradients.
    pub grad_mse_to_oracle: Option<f64>,
}

/// Batch-averaged weight gradients for one minibatch, without updating.
pub fn minibatch_gradients(
    params: &NetworkParams,
    inputs: &[&Vector],
    targets: &[&Vector],
    variant: TrainVariant,
    relax: &VariantConfig,
) -> Result<Vec<Matrix>> {
    let dense = DenseParams::new(params);
    Ok(gradients(&dense, inputs, targets, variant, relax, false)?.0)
}

/// Weight gradients, batch statistics, the forward trace and the frozen derivatives.
type BatchGradients = (Vec<Matrix>, BatchStats, BatchTrace, Vec<DMatrix<f64>>);

fn gradients(
    dense: &DenseParams,
    inputs: &[&Vector],
    targets: &[&Vector],
    variant: TrainVariant,
    relax: &VariantConfig,
    sample: bool,
) -> Result<BatchGradients> {
    if inputs.len() != targets.len() || inputs.is_empty() {
        return Err(ArError::shape(
            "minibatch",
            format!("{} inputs", inputs.len()),
            format!("{} targets", targets.len()),
        ));
    }
    let depth = dense.specs.len();
    let x = stack(inputs);
    if x.nrows() != dense.specs[0].in_dim {
        return Err(ArError::shape(
            "minibatch",
            format!("input dim {}", x.nrows()),
            format!("network input {}", dense.specs[0].in_dim),
        ));
    }
    let t = stack(targets);
    if t.nrows() != dense.specs[depth - 1].out_dim {
        return Err(ArError::shape(
            "minibatch",
            format!("target dim {}", t.nrows()),
            format!("network output {}", dense.specs[depth - 1].out_dim),
        ));
    }
    let n = inputs.len();
    let trace = dense.forward(x);
    let derivs = dense.derivs(&trace);

    let out = &trace.acts[depth];
    let diff = out - &t;
    let loss = diff.iter().map(|v| 0.5 * v * v).sum::<f64>() / n as f64;
    let correct = (0..n)
        .filter(|&b| column_argmax(out, b) == column_argmax(&t, b))
        .count();

    let exact = match variant {
        TrainVariant::BackpropOracle => None,
        TrainVariant::Relax(mode) => Some((
            mode,
            relax_batch(
                dense,
                &trace,
                &derivs,
                &t,
                &VariantConfig {
                    mode,
                    ..relax.clone()
                },
            )?,
        )),
    };
    let oracle = if exact.is_none() || sample {
        Some(backprop_batch(dense, &trace, &derivs, &t))
    } else {
        None
    };
    let grad_mse_to_oracle = match (sample, &exact, &oracle) {
        (false, _, _) => None,
        (true, None, _) => Some(0.0),
        (true, Some((_, g)), Some(o)) => {
            let hidden = (1..depth)
                .map(|l| (&g[l] - &o[l]).map(|v| v * v).mean())
                .collect::<Vec<_>>();
            Some(if hidden.is_empty() {
                0.0
            } else {
                hidden.iter().sum::<f64>() / hidden.len() as f64
            })
        }
        (true, Some(_), None) => unreachable!("oracle computed when sampling"),
    };

    let (g, use_deriv) = match exact {
        Some((mode, g)) => (g, mode.uses_derivative()),
        None => (oracle.expect("computed for the oracle variant"), true),
    };
    let scale = 1.0 / n as f64;
    let grads = (0..depth)
        .map(|l| {
            let delta = if use_deriv {
                g[l + 1].component_mul(&derivs[l])
            } else {
                g[l + 1].clone()
            };
            from_dmatrix(&((delta * trace.acts[l].transpose()) * scale))
        })
        .collect();
    Ok((
        grads,
        BatchStats {
            loss,
            correct,
            count: n,
            grad_mse_to_oracle,
        },
        trace,
        derivs,
    ))
}

/// First index of the largest entry of column `b`.
fn column_argmax(m: &DMatrix<f64>, b: usize) -> usize {
    let col = m.column(b);
    let mut best = 0;
    for i in 1..col.len() {
        if col[i] > col[best] {
            best = i;
        }
    }
    best
}

/// One parameter update from a minibatch. `params` is left untouched when
/// the update would produce non-finite values.
pub fn train_minibatch(
    params: &mut NetworkParams,
    inputs: &[&Vector],
    targets: &[&Vector],
    cfg: &TrainConfig,
) -> Result<BatchStats> {
    let dense = DenseParams::new(params);
    let (grads, stats, trace, derivs) = gradients(
        &dense,
        inputs,
        targets,
        cfg.variant,
        &cfg.relax,
        cfg.sample_gradients,
    )?;
    let mut next = params.clone();
    apply_weight_gradients(&mut next, &grads, cfg.relax.eta_theta)?;
    if let TrainVariant::Relax(mode) = cfg.variant {
        if mode.learns_feedback() {
            let scale = cfg.relax.eta_psi / stats.count as f64;
            let fb = next.feedback_mut().ok_or_else(|| {
                ArError::Config(
                    "feedback update requested but the network has no feedback weights".into(),
                )
            })?;
            for (l, psi) in fb.iter_mut().enumerate() {
                match cfg.feedback_rule {
                    FeedbackRule::Forward => {
                        let post = derivs[l].component_mul(&trace.acts[l + 1]);
                        let inc = from_dmatrix(&(&trace.acts[l] * post.transpose()));
                        psi.axpy(scale, &inc)?;
                    }
                    FeedbackRule::Relaxed => psi.axpy(-cfg.relax.eta_psi, &grads[l].transpose())?,
                }
                if !psi.is_finite() {
                    return Err(ArError::Divergence {
                        layer: l,
                        iteration: 0,
                    });
                }
            }
        }
    }
    *params = next;
    Ok(stats)
}

/// Fraction of items whose output argmax equals the label.
pub fn evaluate(params: &NetworkParams, dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Ok(0.0);
    }
    if dataset.input_dim() != Some(params.input_dim())
        || dataset.classes() != Some(params.output_dim())
    {
        return Err(ArError::shape(
            "evaluate",
            format!("network {:?}", params.widths()),
            format!(
                "dataset dims {:?} -> {:?}",
                dataset.input_dim(),
                dataset.classes()
            ),
        ));
    }
    let dense = DenseParams::new(params);
    let inputs: Vec<&Vector> = dataset.inputs().iter().collect();
    let correct: usize = inputs
        .par_chunks(256)
        .zip(dataset.labels().par_chunks(256))
        .map(|(xs, ls)| {
            let trace = dense.forward(stack(xs));
            let out = trace.acts.last().expect("output present");
            ls.iter()
                .enumerate()
                .filter(|&(b, &l)| column_argmax(out, b) == l)
                .count()
        })
        .sum();
    Ok(correct as f64 / dataset.count() as f64)
}

/// One line of the metrics CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    /// 1-based.
    pub epoch: usize,
    /// 0-based within the epoch.
    pub minibatch_index: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    /// Present on the last minibatch of each epoch.
    pub test_accuracy: Option<f64>,
    pub mean_grad_mse_to_oracle: Option<f64>,
    pub wall_time_ms: u128,
}

pub const METRICS_HEADER: &str =
    "epoch,minibatch_index,train_loss,train_accuracy,test_accuracy,mean_grad_mse_to_oracle,wall_time_ms";

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{}",
            self.epoch,
            self.minibatch_index,
            self.train_loss,
            self.train_accuracy,
            opt(self.test_accuracy),
            opt(self.mean_grad_mse_to_oracle),
            self.wall_time_ms
        )
    }
}

/// CSV writer that flushes after every row.
pub struct MetricsWriter {
    out: BufWriter<File>,
    path: PathBuf,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| ArError::io(path, e))?;
        let mut w = Self {
            out: BufWriter::new(file),
            path: path.to_path_buf(),
        };
        w.line(METRICS_HEADER)?;
        Ok(w)
    }

    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.out, "{s}")
            .and_then(|_| self.out.flush())
            .map_err(|e| ArError::io(&self.path, e))
    }

    pub fn write_row(&mut self, row: &MetricsRow) -> Result<()> {
        self.line(&row.to_csv())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub test_accuracy_per_epoch: Vec<f64>,
    pub final_train_accuracy: Option<f64>,
    pub rows: usize,
}

/// Runs `cfg.epochs` epochs, handing every metrics row to `on_row` as soon as
/// it is complete. On divergence the error is returned after all completed
/// rows were delivered and `params` holds the last finite parameters.
pub fn train(
    params: &mut NetworkParams,
    train_set: &Dataset,
    test_set: &Dataset,
    cfg: &TrainConfig,
    mut on_row: impl FnMut(&MetricsRow) -> Result<()>,
) -> Result<TrainSummary> {
    cfg.validate()?;
    if let Some(relax) = cfg.relax_config() {
        if relax.mode.uses_feedback() && params.feedback().is_none() {
            return Err(ArError::Config(format!(
                "variant {} needs feedback weights",
                relax.mode.name()
            )));
        }
    }
    let start = Instant::now();
    let mut summary = TrainSummary {
        test_accuracy_per_epoch: Vec::new(),
        final_train_accuracy: None,
        rows: 0,
    };
    for epoch in 1..=cfg.epochs {
        let plan = BatchPlan::new(train_set.count(), cfg.batch_size, cfg.seed, epoch as u64)?;
        let total = plan.num_batches();
        for (k, (xs, ts)) in batches(train_set, &plan)?.enumerate() {
            let stats = train_minibatch(params, &xs, &ts, cfg)?;
            let test_accuracy = if k + 1 == total {
                let acc = evaluate(params, test_set)?;
                summary.test_accuracy_per_epoch.push(acc);
                Some(acc)
            } else {
                None
            };
            let train_accuracy = stats.correct as f64 / stats.count as f64;
            summary.final_train_accuracy = Some(train_accuracy);
            on_row(&MetricsRow {
                epoch,
                minibatch_index: k,
                train_loss: stats.loss,
                train_accuracy,
                test_accuracy,
                mean_grad_mse_to_oracle: stats.grad_mse_to_oracle,
                wall_time_ms: start.elapsed().as_millis(),
            })?;
            summary.rows += 1;
        }
    }
    Ok(summary)
}
