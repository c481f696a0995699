//! Accuracy, pairwise diversity and cross-validation.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cotrain::{run_cotraining, CotrainConfig, RoundRecord};
use crate::data::{stratified_split, Dataset, SplitPlan};
use crate::gbdt::train_gbdt;
use crate::tsvm::train_tsvm;
use crate::{CtowError, Result};

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(CtowError::LengthMismatch {
            left: predicted.len(),
            right: truth.len(),
        });
    }
    if truth.is_empty() {
        return Err(CtowError::EmptyDataset);
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Joint correct/wrong counts of two classifiers. The first digit refers to
/// classifier two and the second to classifier one, so `n10` counts rows
/// where classifier two is right and classifier one is wrong.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub n11: u64,
    pub n10: u64,
    pub n01: u64,
    pub n00: u64,
}

impl ContingencyTable {
    pub fn total(&self) -> u64 {
        self.n11 + self.n10 + self.n01 + self.n00
    }
}

/// Cross-tabulates correctness of `pred_a` (classifier one) and `pred_b`
/// (classifier two).
pub fn contingency(
    pred_a: &[usize],
    pred_b: &[usize],
    truth: &[usize],
) -> Result<ContingencyTable> {
    if pred_a.len() != truth.len() || pred_b.len() != truth.len() {
        return Err(CtowError::LengthMismatch {
            left: pred_a.len().max(pred_b.len()),
            right: truth.len(),
        });
    }
    let mut t = ContingencyTable::default();
    for ((a, b), y) in pred_a.iter().zip(pred_b).zip(truth) {
        match (a == y, b == y) {
            (true, true) => t.n11 += 1,
            (false, true) => t.n10 += 1,
            (true, false) => t.n01 += 1,
            (false, false) => t.n00 += 1,
        }
    }
    Ok(t)
}

/// Correlation of the two classifiers' correct/wrong outcomes. `None` when a
/// marginal is empty and the coefficient is undefined.
pub fn rho(t: &ContingencyTable) -> Option<f64> {
    let [n11, n10, n01, n00] = [t.n11, t.n10, t.n01, t.n00].map(|v| v as f64);
    let denom = (n11 + n10) * (n01 + n00) * (n11 + n01) * (n10 + n00);
    if denom == 0.0 {
        return None;
    }
    Some((n11 * n00 - n01 * n10) / denom.sqrt())
}

/// Learning method evaluated by [`cross_validate`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Ctow,
    /// Without the margin-density prior on the TSVM weight.
    CtowNp,
    /// Without the TSVM; all learners are trees.
    CtowNt,
    GbdtOnly,
    TsvmOnly,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Ctow,
        Method::CtowNp,
        Method::CtowNt,
        Method::GbdtOnly,
        Method::TsvmOnly,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Ctow => "ctow",
            Method::CtowNp => "ctow-np",
            Method::CtowNt => "ctow-nt",
            Method::GbdtOnly => "gbdt-only",
            Method::TsvmOnly => "tsvm-only",
        }
    }

    /// The co-training configuration this method runs with.
    pub fn configure(&self, base: &CotrainConfig) -> CotrainConfig {
        let mut cfg = base.clone();
        match self {
            Method::Ctow => {
                cfg.use_prior = true;
                cfg.use_tsvm = true;
            }
            Method::CtowNp => {
                cfg.use_prior = false;
                cfg.use_tsvm = true;
            }
            Method::CtowNt => {
                cfg.use_prior = false;
                cfg.use_tsvm = false;
            }
            Method::GbdtOnly | Method::TsvmOnly => {}
        }
        cfg
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = CtowError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| CtowError::InvalidConfig(format!("unknown method `{s}`")))
    }
}

/// Outcome of one fold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub accuracy: f64,
    pub labeled: usize,
    pub unlabeled: usize,
    pub test: usize,
    pub rounds_run: usize,
    pub history: Vec<RoundRecord>,
}

/// Cross-validation summary. `wall_time_secs` is left out of the serialized
/// form so that reports of identical runs are byte-identical.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub method: Method,
    pub label_rate: f64,
    pub folds: usize,
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub fold_results: Vec<FoldResult>,
    pub config: CotrainConfig,
    #[serde(skip)]
    pub wall_time_secs: f64,
}

impl CvReport {
    pub const CSV_HEADER: &'static str = "dataset,method,label_rate,mean,std,time_secs";

    /// One line in [`CvReport::CSV_HEADER`] column order.
    pub fn csv_row(&self, dataset: &str) -> String {
        format!(
            "{},{},{},{},{},{:.3}",
            dataset, self.method, self.label_rate, self.mean, self.std, self.wall_time_secs
        )
    }
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Test accuracy of `method` on one split, using the hidden labels of the
/// test rows.
pub fn evaluate_split(
    ds: &Dataset,
    split: &SplitPlan,
    method: Method,
    config: &CotrainConfig,
) -> Result<(f64, usize, Vec<RoundRecord>)> {
    let truth = ds.labels_of(&split.test_ids)?;
    let test_x = ds.features().select_rows(&split.test_ids);
    let labeled_x = ds.features().select_rows(&split.labeled_ids);
    let labeled_y = ds.labels_of(&split.labeled_ids)?;
    let (predicted, rounds, history) = match method {
        Method::GbdtOnly => {
            let m = train_gbdt(&labeled_x, &labeled_y, ds.class_count(), &config.gbdt)?;
            (m.predict_proba(&test_x)?.argmax(), 0, Vec::new())
        }
        Method::TsvmOnly => {
            let ux = ds.features().select_rows(&split.unlabeled_ids);
            let m = train_tsvm(&labeled_x, &labeled_y, ds.class_count(), &ux, &config.tsvm)?;
            (m.predict_proba(&test_x)?.argmax(), 0, Vec::new())
        }
        _ => {
            let model = run_cotraining(ds, split, &method.configure(config))?;
            let (_, labels) = model.predict(&test_x)?;
            (labels, model.rounds_run, model.history)
        }
    };
    Ok((accuracy(&predicted, &truth)?, rounds, history))
}

/// Stratified `folds`-fold cross-validation at the given label rate. The
/// split seed is `config.seed`; folds run in parallel.
pub fn cross_validate(
    ds: &Dataset,
    config: &CotrainConfig,
    method: Method,
    folds: usize,
    label_rate: f64,
) -> Result<CvReport> {
    let started = Instant::now();
    let config = method.configure(config);
    let fold_results = (0..folds)
        .into_par_iter()
        .map(|fold| {
            let split = stratified_split(ds, label_rate, folds, fold, config.seed)?;
            let (accuracy, rounds_run, history) = evaluate_split(ds, &split, method, &config)?;
            Ok(FoldResult {
                fold,
                accuracy,
                labeled: split.labeled_ids.len(),
                unlabeled: split.unlabeled_ids.len(),
                test: split.test_ids.len(),
                rounds_run,
                history,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let fold_accuracies: Vec<f64> = fold_results.iter().map(|f| f.accuracy).collect();
    let (mean, std) = mean_std(&fold_accuracies);
    Ok(CvReport {
        method,
        label_rate,
        folds,
        fold_accuracies,
        mean,
        std,
        fold_results,
        config,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}
