//! Resolution of settings from flags, an optional TOML file and defaults.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use ctow::cotrain::CotrainConfig;
use ctow::gbdt::GbdtConfig;
use ctow::metrics::Method;
use ctow::tsvm::TsvmConfig;
use serde::Deserialize;

use crate::error::{CliError, Result};

pub const DEFAULT_LABEL_RATE: f64 = 0.1;
pub const DEFAULT_FOLDS: usize = 5;

/// Settings shared by every command that trains.
#[derive(Args, Debug, Clone, Default)]
pub struct Settings {
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Name of the label column.
    #[arg(long = "label-col")]
    pub label_col: Option<String>,
    /// Comma-separated label rates.
    #[arg(long = "label-rate", value_delimiter = ',')]
    pub label_rate: Option<Vec<f64>>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated methods: ctow, ctow-np, ctow-nt, gbdt-only, tsvm-only.
    #[arg(long, value_delimiter = ',')]
    pub method: Option<Vec<Method>>,
    /// Number of learners.
    #[arg(long)]
    pub k: Option<usize>,
    /// Pseudo-label confidence threshold.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Margin-density threshold of the TSVM weight prior.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Weight regularizer.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Projected-gradient steps per weight solve.
    #[arg(long = "inner-iters")]
    pub inner_iters: Option<usize>,
    #[arg(long = "max-rounds")]
    pub max_rounds: Option<usize>,
    /// Fraction of unlabeled rows offered to each learner per round.
    #[arg(long = "bootstrap-frac")]
    pub bootstrap_frac: Option<f64>,
    /// Rescale leave-one-out probabilities before the confidence test.
    #[arg(long = "normalize-loo")]
    pub normalize_loo: bool,
    /// TOML file with any of the above keys (snake_case) plus [gbdt] and
    /// [tsvm] tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    label_col: Option<String>,
    label_rate: Option<OneOrMany<f64>>,
    folds: Option<usize>,
    seed: Option<u64>,
    method: Option<OneOrMany<Method>>,
    k: Option<usize>,
    beta: Option<f64>,
    alpha: Option<f64>,
    mu: Option<f64>,
    inner_iters: Option<usize>,
    max_rounds: Option<usize>,
    bootstrap_frac: Option<f64>,
    normalize_loo: Option<bool>,
    step0: Option<f64>,
    epsilon_clip: Option<f64>,
    gbdt: Option<GbdtConfig>,
    tsvm: Option<TsvmConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v],
            OneOrMany::Many(v) => v,
        }
    }
}

fn read_file_config(path: &Path) -> Result<FileConfig> {
    let fail = |message: String| CliError::Config {
        path: path.display().to_string(),
        message,
    };
    let text = fs::read_to_string(path).map_err(|e| fail(e.to_string()))?;
    toml::from_str(&text).map_err(|e| fail(e.to_string()))
}

/// Fully resolved settings.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub label_col: Option<String>,
    pub label_rates: Vec<f64>,
    pub folds: usize,
    pub methods: Vec<Method>,
    pub config: CotrainConfig,
}

impl Settings {
    /// Flags override the config file, which overrides the defaults.
    pub fn resolve(&self) -> Result<Resolved> {
        let file = match &self.config {
            Some(p) => read_file_config(p)?,
            None => FileConfig::default(),
        };
        let mut cfg = CotrainConfig::default();
        if let Some(g) = file.gbdt {
            cfg.gbdt = g;
        }
        if let Some(t) = file.tsvm {
            cfg.tsvm = t;
        }
        macro_rules! pick {
            ($field:ident, $flag:expr, $file:expr) => {
                if let Some(v) = $flag.or($file) {
                    cfg.$field = v;
                }
            };
        }
        pick!(k_learners, self.k, file.k);
        pick!(beta, self.beta, file.beta);
        pick!(alpha, self.alpha, file.alpha);
        pick!(mu, self.mu, file.mu);
        pick!(t_inner, self.inner_iters, file.inner_iters);
        pick!(max_rounds, self.max_rounds, file.max_rounds);
        pick!(bootstrap_fraction, self.bootstrap_frac, file.bootstrap_frac);
        pick!(seed, self.seed, file.seed);
        pick!(step0, None, file.step0);
        pick!(epsilon_clip, None, file.epsilon_clip);
        cfg.normalize_loo = self.normalize_loo || file.normalize_loo.unwrap_or(false);
        cfg.validate()?;

        let label_rates = self
            .label_rate
            .clone()
            .or(file.label_rate.map(OneOrMany::into_vec))
            .unwrap_or_else(|| vec![DEFAULT_LABEL_RATE]);
        if label_rates.is_empty() || label_rates.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
            return Err(CliError::Usage(format!(
                "label rates must lie in (0, 1], got {label_rates:?}"
            )));
        }
        let folds = self.folds.or(file.folds).unwrap_or(DEFAULT_FOLDS);
        if folds < 2 {
            return Err(CliError::Usage(format!(
                "need at least 2 folds, got {folds}"
            )));
        }
        let methods = self
            .method
            .clone()
            .or(file.method.map(OneOrMany::into_vec))
            .unwrap_or_else(|| vec![Method::Ctow]);
        if methods.is_empty() {
            return Err(CliError::Usage("no method given".into()));
        }
        Ok(Resolved {
            label_col: self.label_col.clone().or(file.label_col),
            label_rates,
            folds,
            methods,
            config: cfg,
        })
    }
}
