//! Run configuration: command-line flags layered over an optional
//! `key = value` file, layered over built-in defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ar_core::data::Split;
use ar_core::train::{FeedbackRule, TrainVariant};
use ar_core::{ArError, Result, Schedule, Variant};
use clap::{Args, ValueEnum};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DatasetKind {
    Mnist,
    Fashion,
    Synthetic,
}

impl FromStr for DatasetKind {
    type Err = ArError;

    fn from_str(s: &str) -> Result<Self> {
        <Self as ValueEnum>::from_str(s, true)
            .map_err(|_| ArError::Config(format!("unknown dataset '{s}'")))
    }
}

/// Flags shared by every subcommand. Everything is optional here so that a
/// config file can fill the gaps.
#[derive(Args, Clone, Debug, Default)]
pub struct Flags {
    /// mnist, fashion or synthetic
    #[arg(long, value_enum)]
    pub dataset: Option<DatasetKind>,
    /// Directory holding mnist/ and fashion/ IDX files [default: $AR_DATA_DIR or ./data]
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Layer widths, e.g. 784-300-300-100-10
    #[arg(long)]
    pub arch: Option<String>,
    /// Training epochs [default: 10]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Minibatch size [default: 64]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Relaxation steps per item [default: 100]
    #[arg(long)]
    pub relax_iters: Option<usize>,
    /// Relaxation step size, in (0, 1] [default: 0.1]
    #[arg(long)]
    pub eta_x: Option<f64>,
    /// Weight learning rate [default: 0.001]
    #[arg(long)]
    pub eta_theta: Option<f64>,
    /// Feedback-weight learning rate [default: 0.0001]
    #[arg(long)]
    pub eta_psi: Option<f64>,
    /// exact, fixed-feedback, learned-feedback, no-derivative, combined or backprop-oracle
    #[arg(long)]
    pub variant: Option<String>,
    /// Feedback-weight update: forward or relaxed
    #[arg(long)]
    pub feedback_rule: Option<String>,
    /// jacobi or gauss-seidel
    #[arg(long)]
    pub schedule: Option<String>,
    /// Stop relaxing once no entry moves by more than this (0 runs all iterations)
    #[arg(long)]
    pub tol: Option<f64>,
    /// Seed for initialization and data order [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Use only the first N training items (synthetic: generate N)
    #[arg(long)]
    pub subset: Option<usize>,
    /// Use only the first N test items (synthetic: generate N)
    #[arg(long)]
    pub test_subset: Option<usize>,
    /// Record the mean squared gap to the exact gradients every minibatch
    #[arg(long)]
    pub sample_gradients: bool,
    /// Metrics CSV (train) or gradient trace CSV (gradcheck)
    #[arg(long)]
    pub metrics_out: Option<PathBuf>,
    /// Write the trained parameters here
    #[arg(long)]
    pub checkpoint_out: Option<PathBuf>,
    /// Parameters to evaluate, or to start training from
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Graph description for convexity
    #[arg(long)]
    pub graph_file: Option<PathBuf>,
    /// Comma-separated step sizes; gradcheck writes one CSV per value
    #[arg(long)]
    pub eta_grid: Option<String>,
    /// MSE level for the iterations-to-threshold report
    #[arg(long)]
    pub threshold: Option<f64>,
    /// train or test (eval)
    #[arg(long)]
    pub split: Option<String>,
    /// File of key = value lines; flags take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetKind,
    pub data_dir: PathBuf,
    pub arch: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub relax_iters: usize,
    pub eta_x: f64,
    pub eta_theta: f64,
    pub eta_psi: f64,
    pub variant: TrainVariant,
    pub feedback_rule: FeedbackRule,
    pub schedule: Schedule,
    pub tol: f64,
    pub seed: u64,
    pub subset: Option<usize>,
    pub test_subset: Option<usize>,
    pub sample_gradients: bool,
    pub metrics_out: PathBuf,
    pub checkpoint_out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub graph_file: Option<PathBuf>,
    pub eta_grid: Vec<f64>,
    pub threshold: f64,
    pub split: Split,
}

pub const DEFAULT_ARCH: [usize; 5] = [784, 300, 300, 100, 10];

const KEYS: &[&str] = &[
    "dataset",
    "data_dir",
    "arch",
    "epochs",
    "batch_size",
    "relax_iters",
    "eta_x",
    "eta_theta",
    "eta_psi",
    "variant",
    "feedback_rule",
    "schedule",
    "tol",
    "seed",
    "subset",
    "test_subset",
    "sample_gradients",
    "metrics_out",
    "checkpoint_out",
    "checkpoint",
    "graph_file",
    "eta_grid",
    "threshold",
    "split",
];

/// Parsed `key = value` file. Keys may use `-` or `_`; `#` starts a comment.
#[derive(Clone, Debug, Default)]
pub struct ConfigFile {
    path: String,
    values: BTreeMap<String, (usize, String)>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ArError::Io {
            path: path.into(),
            source: e,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| ArError::Parse {
                path: origin.to_string(),
                line: i + 1,
                message,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got '{line}'")))?;
            let key = k.trim().replace('-', "_");
            if !KEYS.contains(&key.as_str()) {
                return Err(err(format!("unknown key '{}'", k.trim())));
            }
            if values
                .insert(key.clone(), (i + 1, v.trim().to_string()))
                .is_some()
            {
                return Err(err(format!("key '{key}' given twice")));
            }
        }
        Ok(Self {
            path: origin.to_string(),
            values,
        })
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some((line, v)) => v.parse().map(Some).map_err(|e: T::Err| ArError::Parse {
                path: self.path.clone(),
                line: *line,
                message: format!("{key}: {e}"),
            }),
        }
    }
}

pub fn parse_arch(s: &str) -> Result<Vec<usize>> {
    let widths = s
        .split(['-', ',', 'x'])
        .map(|w| {
            w.trim()
                .parse::<usize>()
                .ok()
                .filter(|&w| w > 0)
                .ok_or_else(|| ArError::Config(format!("bad layer width '{w}' in --arch {s}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if widths.len() < 2 {
        return Err(ArError::Config(format!(
            "--arch needs at least two widths, got '{s}'"
        )));
    }
    Ok(widths)
}

pub fn parse_schedule(s: &str) -> Result<Schedule> {
    match s {
        "jacobi" => Ok(Schedule::Jacobi),
        "gauss-seidel" | "gauss_seidel" => Ok(Schedule::GaussSeidel),
        _ => Err(ArError::Config(format!(
            "unknown schedule '{s}' (expected jacobi or gauss-seidel)"
        ))),
    }
}

pub fn parse_split(s: &str) -> Result<Split> {
    match s {
        "train" => Ok(Split::Train),
        "test" => Ok(Split::Test),
        _ => Err(ArError::Config(format!(
            "unknown split '{s}' (expected train or test)"
        ))),
    }
}

pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| ArError::Config(format!("bad step size '{t}' in --eta-grid")))
        })
        .collect()
}

/// A value may come as a typed flag or as text from the file; text goes
/// through `convert`.
fn layered<T>(
    flag: Option<T>,
    file: &ConfigFile,
    key: &str,
    convert: impl Fn(&str) -> Result<T>,
) -> Result<Option<T>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match file.get::<String>(key)? {
        None => Ok(None),
        Some(text) => convert(&text).map(Some).map_err(|e| {
            let line = file.values.get(key).map_or(0, |(l, _)| *l);
            ArError::Parse {
                path: file.path.clone(),
                line,
                message: e.to_string(),
            }
        }),
    }
}

fn typed<T: FromStr>(flag: Option<T>, file: &ConfigFile, key: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    match flag {
        Some(v) => Ok(Some(v)),
        None => file.get(key),
    }
}

impl RunConfig {
    /// `default_metrics` names the output file when none is configured.
    pub fn resolve(flags: &Flags, default_metrics: &str) -> Result<Self> {
        let file = match &flags.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        let text = |flag: &Option<String>, key: &str| typed(flag.clone(), &file, key);

        let dataset = layered(
            flags.dataset,
            &file,
            "dataset",
            <DatasetKind as FromStr>::from_str,
        )?
        .unwrap_or(DatasetKind::Mnist);
        let data_dir =
            typed(flags.data_dir.clone(), &file, "data_dir")?.unwrap_or_else(default_data_dir);
        let arch = match text(&flags.arch, "arch")? {
            Some(s) => parse_arch(&s)?,
            None => DEFAULT_ARCH.to_vec(),
        };
        let variant = match text(&flags.variant, "variant")? {
            Some(s) => s.parse()?,
            None => TrainVariant::Relax(Variant::Exact),
        };
        let feedback_rule = match text(&flags.feedback_rule, "feedback_rule")? {
            Some(s) => s.parse()?,
            None => FeedbackRule::Forward,
        };
        let schedule = match text(&flags.schedule, "schedule")? {
            Some(s) => parse_schedule(&s)?,
            None => Schedule::Jacobi,
        };
        let eta_grid = match text(&flags.eta_grid, "eta_grid")? {
            Some(s) => parse_grid(&s)?,
            None => Vec::new(),
        };
        let split = match text(&flags.split, "split")? {
            Some(s) => parse_split(&s)?,
            None => Split::Test,
        };
        let sample_gradients =
            flags.sample_gradients || file.get::<bool>("sample_gradients")?.unwrap_or(false);

        let cfg = RunConfig {
            dataset,
            data_dir,
            arch,
            epochs: typed(flags.epochs, &file, "epochs")?.unwrap_or(10),
            batch_size: typed(flags.batch_size, &file, "batch_size")?.unwrap_or(64),
            relax_iters: typed(flags.relax_iters, &file, "relax_iters")?.unwrap_or(100),
            eta_x: typed(flags.eta_x, &file, "eta_x")?.unwrap_or(0.1),
            eta_theta: typed(flags.eta_theta, &file, "eta_theta")?.unwrap_or(0.001),
            eta_psi: typed(flags.eta_psi, &file, "eta_psi")?.unwrap_or(1e-4),
            variant,
            feedback_rule,
            schedule,
            tol: typed(flags.tol, &file, "tol")?.unwrap_or(0.0),
            seed: typed(flags.seed, &file, "seed")?.unwrap_or(0),
            subset: typed(flags.subset, &file, "subset")?,
            test_subset: typed(flags.test_subset, &file, "test_subset")?,
            sample_gradients,
            metrics_out: typed(flags.metrics_out.clone(), &file, "metrics_out")?
                .unwrap_or_else(|| PathBuf::from(default_metrics)),
            checkpoint_out: typed(flags.checkpoint_out.clone(), &file, "checkpoint_out")?,
            checkpoint: typed(flags.checkpoint.clone(), &file, "checkpoint")?,
            graph_file: typed(flags.graph_file.clone(), &file, "graph_file")?,
            eta_grid,
            threshold: typed(flags.threshold, &file, "threshold")?.unwrap_or(1e-6),
            split,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.relax_iters == 0 {
            return Err(ArError::Config(
                "batch size and relaxation iterations must be positive".into(),
            ));
        }
        for (name, v) in [
            ("eta_x", self.eta_x),
            ("eta_theta", self.eta_theta),
            ("eta_psi", self.eta_psi),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ArError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.eta_grid.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
            return Err(ArError::Config(
                "every --eta-grid value must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn relax_config(&self, mode: Variant) -> ar_core::VariantConfig {
        ar_core::VariantConfig {
            mode,
            eta_x: self.eta_x,
            eta_theta: self.eta_theta,
            eta_psi: self.eta_psi,
            iters: self.relax_iters,
            tol: self.tol,
            schedule: self.schedule,
        }
    }
}

fn default_data_dir() -> PathBuf {
    std::env::var_os("AR_DATA_DIR").map_or_else(|| PathBuf::from("data"), PathBuf::from)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_reference_protocol() {
        let cfg = RunConfig::resolve(&Flags::default(), "metrics.csv").unwrap();
        assert_eq!(cfg.arch, DEFAULT_ARCH);
        assert_eq!((cfg.epochs, cfg.batch_size, cfg.relax_iters), (10, 64, 100));
        assert_eq!((cfg.eta_x, cfg.eta_theta, cfg.eta_psi), (0.1, 0.001, 1e-4));
        assert_eq!(cfg.variant, TrainVariant::Relax(Variant::Exact));
        assert_eq!(cfg.schedule, Schedule::Jacobi);
    }

    #[test]
    fn flags_beat_file_beat_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(
            &path,
            "# desk run\nepochs = 3\neta-theta = 0.05\nschedule = gauss-seidel\n",
        )
        .unwrap();
        let flags = Flags {
            config: Some(path),
            epochs: Some(2),
            ..Flags::default()
        };
        let cfg = RunConfig::resolve(&flags, "m.csv").unwrap();
        assert_eq!(cfg.epochs, 2);
        assert_eq!(cfg.eta_theta, 0.05);
        assert_eq!(cfg.schedule, Schedule::GaussSeidel);
        assert_eq!(cfg.batch_size, 64);
    }

    #[test]
    fn file_errors_name_the_line() {
        let e = ConfigFile::parse("epochs = 3\nbogus = 1\n", "run.cfg").unwrap_err();
        assert!(matches!(e, ArError::Parse { line: 2, .. }), "{e}");
        let e = ConfigFile::parse("epochs = three\n", "run.cfg")
            .unwrap()
            .get::<usize>("epochs")
            .unwrap_err();
        assert!(matches!(e, ArError::Parse { line: 1, .. }), "{e}");
        assert!(ConfigFile::parse("epochs 3\n", "run.cfg").is_err());
    }

    #[test]
    fn arch_and_grid_parsing() {
        assert_eq!(parse_arch("784-300-10").unwrap(), vec![784, 300, 10]);
        assert_eq!(parse_arch("4,3").unwrap(), vec![4, 3]);
        assert!(parse_arch("4").is_err());
        assert!(parse_arch("4-0-2").is_err());
        assert_eq!(parse_grid("0.05,0.1, 0.3").unwrap(), vec![0.05, 0.1, 0.3]);
        assert!(parse_grid("0.1,x").is_err());
    }
}
