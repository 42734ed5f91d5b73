//! `arelax`: train, evaluate, gradient-check and convexity-check from the
//! command line.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 I/O or file
//! format error, 3 divergence.

pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::Path;

use ar_core::checkpoint::{load_checkpoint, load_checkpoint_for, save_checkpoint};
use ar_core::daggraph::random::random_inputs;
use ar_core::daggraph::{
    build_graph, check_convexity, dag_forward, parse_graph_file, WeightSource,
};
use ar_core::data::{batches, load_mnist_split, synthetic_dataset, BatchPlan, Dataset, Split};
use ar_core::diagnostics::{eta_grid, gradient_trace, grid_path, GradientTrace};
use ar_core::network::mlp_specs;
use ar_core::train::{evaluate, init_for, train, MetricsWriter, TrainConfig, TrainVariant};
use ar_core::{ArError, FeedbackInit, NetworkParams, Result, Variant};
use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use config::{DatasetKind, Flags, RunConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_IO: u8 = 2;
pub const EXIT_DIVERGENCE: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "arelax",
    version,
    about = "Backprop gradients as the equilibrium of a relaxation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train an MLP and write per-minibatch metrics
    Train(Flags),
    /// Report the accuracy of a checkpoint
    Eval(Flags),
    /// Trace relaxation error against exact gradients per iteration
    Gradcheck(Flags),
    /// Check the Hessian structure of a graph file
    Convexity(Flags),
}

pub fn exit_code(e: &ArError) -> u8 {
    match e {
        ArError::Config(_) => EXIT_USAGE,
        ArError::Divergence { .. } => EXIT_DIVERGENCE,
        _ => EXIT_IO,
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    match dispatch(&cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: &Command, out: &mut dyn Write) -> Result<u8> {
    match command {
        Command::Train(f) => run_train(&RunConfig::resolve(f, "metrics.csv")?, out),
        Command::Eval(f) => run_eval(&RunConfig::resolve(f, "metrics.csv")?, out),
        Command::Gradcheck(f) => run_gradcheck(&RunConfig::resolve(f, "gradcheck.csv")?, out),
        Command::Convexity(f) => run_convexity(&RunConfig::resolve(f, "metrics.csv")?, out),
    }
}

fn say(out: &mut dyn Write, text: std::fmt::Arguments<'_>) -> Result<()> {
    writeln!(out, "{text}").map_err(|e| ArError::Io {
        path: "<stdout>".into(),
        source: e,
    })
}

fn dataset_dir(cfg: &RunConfig) -> std::path::PathBuf {
    match cfg.dataset {
        DatasetKind::Mnist => cfg.data_dir.join("mnist"),
        DatasetKind::Fashion => cfg.data_dir.join("fashion"),
        DatasetKind::Synthetic => cfg.data_dir.clone(),
    }
}

/// Synthetic sets: 1000 training and 200 test items unless subsets are given.
pub fn load_split(cfg: &RunConfig, split: Split) -> Result<Dataset> {
    let limit = match split {
        Split::Train => cfg.subset,
        Split::Test => cfg.test_subset,
    };
    match cfg.dataset {
        DatasetKind::Synthetic => {
            let (n, seed) = match split {
                Split::Train => (limit.unwrap_or(1000), cfg.seed),
                Split::Test => (limit.unwrap_or(200), cfg.seed.wrapping_add(1)),
            };
            let classes = *cfg.arch.last().expect("arch has two or more widths");
            synthetic_dataset(seed, n, cfg.arch[0], classes)
        }
        _ => {
            let ds = load_mnist_split(&dataset_dir(cfg), split)?;
            Ok(match limit {
                Some(n) => ds.subset(n),
                None => ds,
            })
        }
    }
}

fn check_dims(cfg: &RunConfig, ds: &Dataset) -> Result<()> {
    let (input, classes) = (ds.input_dim(), ds.classes());
    let want = (
        Some(cfg.arch[0]),
        Some(*cfg.arch.last().expect("two or more widths")),
    );
    if (input, classes) != want {
        return Err(ArError::Config(format!(
            "--arch {:?} does not fit the dataset ({} inputs, {} classes)",
            cfg.arch,
            input.map_or("no".into(), |d| d.to_string()),
            classes.map_or("no".into(), |d| d.to_string()),
        )));
    }
    Ok(())
}

fn initial_params(cfg: &RunConfig) -> Result<NetworkParams> {
    let specs = mlp_specs(&cfg.arch)?;
    match &cfg.checkpoint {
        None => init_for(&specs, cfg.seed, cfg.variant),
        Some(path) => {
            let params = load_checkpoint_for(path, &specs)?;
            if cfg.variant.uses_feedback() && params.feedback().is_none() {
                // Fresh feedback weights with the usual initialization.
                let fb = ar_core::init_params(&specs, cfg.seed, FeedbackInit::Random)?;
                return params.with_feedback(fb.feedback().map(<[_]>::to_vec));
            }
            Ok(params)
        }
    }
}

pub fn train_config(cfg: &RunConfig) -> TrainConfig {
    let mode = match cfg.variant {
        TrainVariant::Relax(m) => m,
        TrainVariant::BackpropOracle => Variant::Exact,
    };
    TrainConfig {
        variant: cfg.variant,
        relax: cfg.relax_config(mode),
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        seed: cfg.seed,
        sample_gradients: cfg.sample_gradients,
        feedback_rule: cfg.feedback_rule,
    }
}

pub fn run_train(cfg: &RunConfig, out: &mut dyn Write) -> Result<u8> {
    let train_set = load_split(cfg, Split::Train)?;
    let test_set = load_split(cfg, Split::Test)?;
    check_dims(cfg, &train_set)?;
    check_dims(cfg, &test_set)?;
    let mut params = initial_params(cfg)?;
    let tc = train_config(cfg);
    let mut writer = MetricsWriter::create(&cfg.metrics_out)?;
    let summary = train(&mut params, &train_set, &test_set, &tc, |row| {
        writer.write_row(row)
    })?;
    for (k, acc) in summary.test_accuracy_per_epoch.iter().enumerate() {
        say(out, format_args!("epoch {} test_accuracy {acc:.4}", k + 1))?;
    }
    if let Some(path) = &cfg.checkpoint_out {
        save_checkpoint(path, &params)?;
        say(
            out,
            format_args!("checkpoint written to {}", path.display()),
        )?;
    }
    say(
        out,
        format_args!("metrics written to {}", cfg.metrics_out.display()),
    )?;
    Ok(EXIT_OK)
}

pub fn run_eval(cfg: &RunConfig, out: &mut dyn Write) -> Result<u8> {
    let path = cfg
        .checkpoint
        .as_ref()
        .ok_or_else(|| ArError::Config("eval needs --checkpoint".into()))?;
    let params = load_checkpoint_for(path, &mlp_specs(&cfg.arch)?)?;
    let ds = load_split(cfg, cfg.split)?;
    check_dims(cfg, &ds)?;
    let acc = evaluate(&params, &ds)?;
    say(out, format_args!("accuracy {acc}"))?;
    Ok(EXIT_OK)
}

fn report_trace(out: &mut dyn Write, trace: &GradientTrace, threshold: f64) -> Result<()> {
    for r in trace.terminal() {
        say(
            out,
            format_args!(
                "iteration {} layer {} mse_to_oracle {:e} max_abs_diff {:e}",
                r.iteration, r.layer, r.mse_to_oracle, r.max_abs_diff
            ),
        )?;
    }
    match trace.iterations_to(threshold) {
        Some(t) => say(out, format_args!("iterations to mse < {threshold:e}: {t}"))?,
        None => say(
            out,
            format_args!("iterations to mse < {threshold:e}: not reached"),
        )?,
    }
    if let Some(d) = trace.divergence {
        say(
            out,
            format_args!("diverged at layer {} iteration {}", d.layer, d.iteration),
        )?;
    }
    Ok(())
}

pub fn run_gradcheck(cfg: &RunConfig, out: &mut dyn Write) -> Result<u8> {
    let mode = match cfg.variant {
        TrainVariant::Relax(m) => m,
        TrainVariant::BackpropOracle => {
            return Err(ArError::Config(
                "gradcheck compares a relaxation variant with the oracle".into(),
            ))
        }
    };
    let ds = load_split(cfg, Split::Train)?;
    check_dims(cfg, &ds)?;
    let params = init_for(&mlp_specs(&cfg.arch)?, cfg.seed, cfg.variant)?;
    let plan = BatchPlan::new(ds.count(), cfg.batch_size, cfg.seed, 1)?;
    let (xs, ts) = batches(&ds, &plan)?
        .next()
        .ok_or_else(|| ArError::Config("empty dataset".into()))?;
    let vc = cfg.relax_config(mode);

    let traces = if cfg.eta_grid.is_empty() {
        vec![(
            cfg.eta_x,
            gradient_trace(&params, &xs, &ts, &vc)?,
            cfg.metrics_out.clone(),
        )]
    } else {
        eta_grid(&params, &xs, &ts, &vc, &cfg.eta_grid)?
            .into_iter()
            .map(|(eta, tr)| (eta, tr, grid_path(&cfg.metrics_out, eta)))
            .collect()
    };
    let mut diverged = false;
    for (eta, trace, path) in &traces {
        trace.write_csv(path)?;
        say(out, format_args!("eta_x {eta} -> {}", path.display()))?;
        report_trace(out, trace, cfg.threshold)?;
        diverged |= trace.divergence.is_some();
    }
    // Only the exact dynamics are expected to stay bounded.
    Ok(if diverged && mode == Variant::Exact {
        EXIT_DIVERGENCE
    } else {
        EXIT_OK
    })
}

pub fn run_convexity(cfg: &RunConfig, out: &mut dyn Write) -> Result<u8> {
    let path = cfg
        .graph_file
        .as_ref()
        .ok_or_else(|| ArError::Config("convexity needs --graph-file".into()))?;
    let spec = parse_graph_file(path)?;
    let loaded;
    let source = match &cfg.checkpoint {
        Some(p) => {
            loaded = load_checkpoint(p)?;
            WeightSource::Checkpoint(loaded.weights())
        }
        None => WeightSource::Seeded(cfg.seed),
    };
    let graph = build_graph(&spec, source)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let state = dag_forward(&graph, &random_inputs(&graph, &mut rng))?;
    let report = check_convexity(&graph, &state)?;
    let yes = |b: bool| if b { "yes" } else { "no" };
    let ids: Vec<String> = report
        .node_order
        .iter()
        .map(|&k| graph.nodes()[k].id.to_string())
        .collect();
    say(out, format_args!("graph {}", display(path)))?;
    say(out, format_args!("topological order {}", ids.join(" ")))?;
    say(
        out,
        format_args!(
            "upper triangular under topological order: {}",
            yes(report.is_upper_triangular_under_topo_order)
        ),
    )?;
    say(
        out,
        format_args!("unit diagonal: {}", yes(report.diagonal_all_ones)),
    )?;
    say(out, format_args!("eigenvalues: {:?}", report.eigenvalues))?;
    let sym = &report.symmetric_part_eigenvalues;
    if let (Some(lo), Some(hi)) = (sym.first(), sym.last()) {
        say(
            out,
            format_args!("symmetric part eigenvalues: min {lo:.6} max {hi:.6}"),
        )?;
    }
    say(
        out,
        format_args!("all affirmative: {}", yes(report.all_affirmative())),
    )?;
    Ok(EXIT_OK)
}

fn display(p: &Path) -> String {
    p.display().to_string()
}
