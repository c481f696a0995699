//! Dataset ingestion and label-rate splitting.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::{rng, CtowError, Matrix, Result};

const MAX_CLASSES: usize = 1000;

/// Feature matrix with optional per-row class labels.
///
/// Rows are identified by their index `0..n`. A dataset loaded without a
/// label column carries no labels and a class count of zero; otherwise the
/// class count is at least two.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<Option<usize>>,
    class_count: usize,
    feature_names: Vec<String>,
    class_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        features: Matrix,
        labels: Vec<Option<usize>>,
        class_count: usize,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let class_names = (0..class_count).map(|c| c.to_string()).collect();
        Self::with_class_names(features, labels, feature_names, class_names)
    }

    pub fn with_class_names(
        features: Matrix,
        labels: Vec<Option<usize>>,
        feature_names: Vec<String>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let class_count = class_names.len();
        if features.rows() == 0 {
            return Err(CtowError::EmptyDataset);
        }
        if features.cols() == 0 {
            return Err(CtowError::InvalidConfig(
                "dataset has no feature columns".into(),
            ));
        }
        if labels.len() != features.rows() {
            return Err(CtowError::LengthMismatch {
                left: features.rows(),
                right: labels.len(),
            });
        }
        if feature_names.len() != features.cols() {
            return Err(CtowError::LengthMismatch {
                left: features.cols(),
                right: feature_names.len(),
            });
        }
        if let Some(bad) = features.as_slice().iter().find(|v| !v.is_finite()) {
            return Err(CtowError::InvalidConfig(format!(
                "non-finite feature value {bad}"
            )));
        }
        let has_labels = labels.iter().any(Option::is_some);
        if has_labels && class_count < 2 {
            return Err(CtowError::TooFewClasses(class_count));
        }
        for &y in labels.iter().flatten() {
            if y >= class_count {
                return Err(CtowError::BadIndex {
                    index: y,
                    len: class_count,
                });
            }
        }
        Ok(Self {
            features,
            labels,
            class_count,
            feature_names,
            class_names,
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn label(&self, row: usize) -> Option<usize> {
        self.labels[row]
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Original label strings, indexed by class id.
    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn n_rows(&self) -> usize {
        self.features.rows()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.labels.iter().all(Option::is_some)
    }

    /// Labels of the given rows; fails if any of them is unlabeled.
    pub fn labels_of(&self, ids: &[usize]) -> Result<Vec<usize>> {
        ids.iter()
            .map(|&i| self.labels[i].ok_or(CtowError::NotFullyLabeled))
            .collect()
    }
}

/// Loads a header-first CSV. `label_column` names the column holding class
/// labels; its values are remapped to `0..C` in order of first appearance and
/// empty cells mark unlabeled rows. Every other cell must be a finite number.
pub fn load_csv(path: impl AsRef<Path>, label_column: Option<&str>) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_csv(file, label_column)
}

pub fn read_csv<R: Read>(reader: R, label_column: Option<&str>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let label_idx = match label_column {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| CtowError::UnknownColumn(name.to_string()))?,
        ),
        None => None,
    };
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != label_idx)
        .map(|(_, h)| h.trim().to_string())
        .collect();

    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut class_ids: HashMap<String, usize> = HashMap::new();
    let mut class_names: Vec<String> = Vec::new();
    let mut rows = 0usize;

    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        for (i, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if Some(i) == label_idx {
                if cell.is_empty() {
                    labels.push(None);
                    continue;
                }
                let next = class_names.len();
                let id = *class_ids.entry(cell.to_string()).or_insert_with(|| {
                    class_names.push(cell.to_string());
                    next
                });
                if class_names.len() > MAX_CLASSES {
                    return Err(CtowError::TooManyClasses(class_names.len()));
                }
                labels.push(Some(id));
                continue;
            }
            let value: f64 = cell.parse().map_err(|_| CtowError::MalformedCsv {
                line,
                message: format!(
                    "column `{}`: cannot parse `{cell}` as a number",
                    &headers[i]
                ),
            })?;
            if !value.is_finite() {
                return Err(CtowError::MalformedCsv {
                    line,
                    message: format!("column `{}`: non-finite value `{cell}`", &headers[i]),
                });
            }
            data.push(value);
        }
        if label_idx.is_none() {
            labels.push(None);
        }
        rows += 1;
    }

    if rows == 0 {
        return Err(CtowError::EmptyDataset);
    }
    if label_idx.is_some() && class_names.len() < 2 {
        return Err(CtowError::TooFewClasses(class_names.len()));
    }
    let features = Matrix::new(rows, feature_names.len(), data)?;
    Dataset::with_class_names(features, labels, feature_names, class_names)
}

fn csv_error(e: csv::Error) -> CtowError {
    let line = e.position().map_or(0, |p| p.line());
    match e.kind() {
        csv::ErrorKind::Io(_) => CtowError::Io(std::io::Error::other(e.to_string())),
        _ => CtowError::MalformedCsv {
            line,
            message: e.to_string(),
        },
    }
}

/// Partition of a dataset's rows into labeled, unlabeled and test sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub labeled_ids: Vec<usize>,
    pub unlabeled_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
    pub label_rate: f64,
    pub seed: u64,
}

impl SplitPlan {
    /// Uses the dataset's own labels: labeled rows form L, unlabeled rows
    /// form U, and there is no test set.
    pub fn from_partial_labels(ds: &Dataset) -> Self {
        let (labeled_ids, unlabeled_ids): (Vec<usize>, Vec<usize>) =
            (0..ds.n_rows()).partition(|&i| ds.label(i).is_some());
        let label_rate = labeled_ids.len() as f64 / ds.n_rows() as f64;
        Self {
            labeled_ids,
            unlabeled_ids,
            test_ids: Vec::new(),
            label_rate,
            seed: 0,
        }
    }
}

/// Holds out fold `fold_index` of a per-class stratified `folds`-way
/// partition as the test set, then reveals `ceil(label_rate * size)` labels
/// (at least one) of every class among the remaining rows.
pub fn stratified_split(
    ds: &Dataset,
    label_rate: f64,
    folds: usize,
    fold_index: usize,
    seed: u64,
) -> Result<SplitPlan> {
    if !(label_rate > 0.0 && label_rate <= 1.0) {
        return Err(CtowError::InvalidConfig(format!(
            "label rate {label_rate} outside (0, 1]"
        )));
    }
    if folds < 2 {
        return Err(CtowError::InvalidConfig(format!(
            "need at least 2 folds, got {folds}"
        )));
    }
    if fold_index >= folds {
        return Err(CtowError::BadFoldIndex {
            index: fold_index,
            folds,
        });
    }
    if !ds.is_fully_labeled() {
        return Err(CtowError::NotFullyLabeled);
    }

    let mut by_class = vec![Vec::new(); ds.class_count()];
    for (i, y) in ds.labels().iter().enumerate() {
        by_class[y.expect("checked fully labeled")].push(i);
    }
    for (class, members) in by_class.iter().enumerate() {
        if members.len() < folds {
            return Err(CtowError::ClassTooSmall {
                class,
                size: members.len(),
                folds,
            });
        }
    }

    let mut labeled = Vec::new();
    let mut unlabeled = Vec::new();
    let mut test = Vec::new();
    for (class, mut members) in by_class.into_iter().enumerate() {
        let mut rng = rng::stream(seed, &[0x5711, class as u64]);
        members.shuffle(&mut rng);
        let mut train = Vec::with_capacity(members.len());
        for (pos, id) in members.into_iter().enumerate() {
            if pos % folds == fold_index {
                test.push(id);
            } else {
                train.push(id);
            }
        }
        let n_labeled = labeled_count(label_rate, train.len());
        labeled.extend_from_slice(&train[..n_labeled]);
        unlabeled.extend_from_slice(&train[n_labeled..]);
    }
    labeled.sort_unstable();
    unlabeled.sort_unstable();
    test.sort_unstable();

    Ok(SplitPlan {
        labeled_ids: labeled,
        unlabeled_ids: unlabeled,
        test_ids: test,
        label_rate,
        seed,
    })
}

/// `ceil(rate * size)`, at least 1 and at most `size`. The small offset keeps
/// products such as `0.1 * 400` from rounding up past the exact integer.
pub fn labeled_count(rate: f64, size: usize) -> usize {
    let raw = (rate * size as f64 - 1e-9).ceil();
    (raw.max(1.0) as usize).min(size)
}
