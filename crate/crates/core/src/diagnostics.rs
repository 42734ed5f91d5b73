//! Convergence traces of the relaxation against the exact gradients.
//!
//! A trace holds, for every iteration `t` (0 is the initial state) and every
//! hidden layer `l` in `1..L`, the mean squared and largest absolute
//! difference between `g^l` and `∂L/∂x^l`, pooled over a set of items.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{ArError, Result};
use crate::math::Vector;
use crate::network::{forward, NetworkParams};
use crate::oracle::backprop;
use crate::relaxation::{relax_observed, VariantConfig};

pub const GRADCHECK_HEADER: &str = "iteration,layer,mse_to_oracle,max_abs_diff";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub layer: usize,
    pub mse_to_oracle: f64,
    pub max_abs_diff: f64,
}

impl TraceRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{}",
            self.iteration, self.layer, self.mse_to_oracle, self.max_abs_diff
        )
    }
}

/// Where a relaxation stopped producing finite values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DivergencePoint {
    pub layer: usize,
    pub iteration: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientTrace {
    /// Ordered by iteration, then layer.
    pub rows: Vec<TraceRow>,
    /// Set when some item diverged; `rows` then stop before that iteration.
    pub divergence: Option<DivergencePoint>,
}

impl GradientTrace {
    pub fn hidden_layers(&self) -> usize {
        self.rows.iter().take_while(|r| r.iteration == 0).count()
    }

    /// Rows of the last recorded iteration.
    pub fn terminal(&self) -> &[TraceRow] {
        let k = self.hidden_layers();
        if k == 0 {
            return &[];
        }
        &self.rows[self.rows.len() - k..]
    }

    /// First iteration at which every hidden layer is below `threshold`.
    pub fn iterations_to(&self, threshold: f64) -> Option<usize> {
        let k = self.hidden_layers();
        if k == 0 {
            return None;
        }
        self.rows
            .chunks(k)
            .find(|rows| rows.iter().all(|r| r.mse_to_oracle < threshold))
            .map(|rows| rows[0].iteration)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| ArError::io(path, e))?;
        let mut out = BufWriter::new(file);
        let mut put = |line: String| writeln!(out, "{line}").map_err(|e| ArError::io(path, e));
        put(GRADCHECK_HEADER.to_string())?;
        for r in &self.rows {
            put(r.to_csv())?;
        }
        if let Some(d) = self.divergence {
            put(format!("{},{},inf,inf", d.iteration, d.layer))?;
        }
        out.flush().map_err(|e| ArError::io(path, e))
    }
}

/// Per-item squared and absolute differences at each observed state.
struct ItemTrace {
    sq: Vec<Vec<f64>>,
    max_abs: Vec<Vec<f64>>,
    divergence: Option<DivergencePoint>,
}

fn trace_item(
    params: &NetworkParams,
    input: &Vector,
    target: &Vector,
    cfg: &VariantConfig,
) -> Result<ItemTrace> {
    let trace = forward(params, input)?;
    let oracle = backprop(&trace, params, target)?;
    let depth = params.depth();
    let mut sq = Vec::with_capacity(cfg.iters + 1);
    let mut max_abs = Vec::with_capacity(cfg.iters + 1);
    let outcome = relax_observed(&trace, params, target, cfg, |state| {
        let mut s = Vec::with_capacity(depth - 1);
        let mut m = Vec::with_capacity(depth - 1);
        for l in 1..depth {
            let (mut acc, mut big) = (0.0, 0.0_f64);
            for (a, b) in state.g[l].iter().zip(oracle.activation_grads[l].iter()) {
                let d = a - b;
                acc += d * d;
                big = big.max(d.abs());
            }
            s.push(acc);
            m.push(big);
        }
        sq.push(s);
        max_abs.push(m);
    });
    let divergence = match outcome {
        Ok(_) => None,
        Err(ArError::Divergence { layer, iteration }) => Some(DivergencePoint { layer, iteration }),
        Err(e) => return Err(e),
    };
    Ok(ItemTrace {
        sq,
        max_abs,
        divergence,
    })
}

/// Relaxes every item and pools the per-iteration gaps to the exact
/// gradients. Divergence of any item is recorded, not raised.
pub fn gradient_trace(
    params: &NetworkParams,
    inputs: &[&Vector],
    targets: &[&Vector],
    cfg: &VariantConfig,
) -> Result<GradientTrace> {
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(ArError::shape(
            "gradient_trace",
            format!("{} inputs", inputs.len()),
            format!("{} targets", targets.len()),
        ));
    }
    cfg.validate()?;
    let items = inputs
        .par_iter()
        .zip(targets.par_iter())
        .map(|(x, t)| trace_item(params, x, t, cfg))
        .collect::<Result<Vec<_>>>()?;

    let divergence = items
        .iter()
        .filter_map(|it| it.divergence)
        .min_by_key(|d| (d.iteration, d.layer));
    let steps = items.iter().map(|it| it.sq.len()).min().unwrap_or(0);
    let steps = match divergence {
        // The state at the diverging iteration was never observed.
        Some(d) => steps.min(d.iteration),
        None => steps,
    };
    let mut rows = Vec::with_capacity(steps * (params.depth() - 1));
    for t in 0..steps {
        for l in 1..params.depth() {
            let count = (items.len() * params.width(l)) as f64;
            let sq: f64 = items.iter().map(|it| it.sq[t][l - 1]).sum();
            let big = items
                .iter()
                .map(|it| it.max_abs[t][l - 1])
                .fold(0.0, f64::max);
            rows.push(TraceRow {
                iteration: t,
                layer: l,
                mse_to_oracle: sq / count,
                max_abs_diff: big,
            });
        }
    }
    Ok(GradientTrace { rows, divergence })
}

/// `<stem>_eta<η>.<ext>` next to `base`, e.g. `grad_eta0.3.csv`.
pub fn grid_path(base: &Path, eta_x: f64) -> PathBuf {
    let stem = base
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match base.extension() {
        Some(ext) => format!("{stem}_eta{eta_x}.{}", ext.to_string_lossy()),
        None => format!("{stem}_eta{eta_x}"),
    };
    base.with_file_name(name)
}

/// One trace per step size, everything else taken from `cfg`.
pub fn eta_grid(
    params: &NetworkParams,
    inputs: &[&Vector],
    targets: &[&Vector],
    cfg: &VariantConfig,
    etas: &[f64],
) -> Result<Vec<(f64, GradientTrace)>> {
    etas.iter()
        .map(|&eta_x| {
            let c = VariantConfig { eta_x, ..*cfg };
            Ok((eta_x, gradient_trace(params, inputs, targets, &c)?))
        })
        .collect()
}
