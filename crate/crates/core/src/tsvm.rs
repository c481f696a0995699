//! Linear one-vs-rest transductive SVM.
//!
//! Every class-vs-rest subproblem minimizes
//!
//! ```text
//! 1/2 ||w||^2 + C_l sum_labeled hinge(y_i f(x_i)) + C_u sum_unlabeled hinge(yhat_j f(x_j))
//! ```
//!
//! over `(w, b)` and the pseudo labels `yhat`. Pseudo labels start from the
//! supervised solution with the labeled class balance, then pairs of
//! opposite pseudo labels are swapped whenever that strictly lowers the
//! objective, while the effective unlabeled penalty doubles from `1e-4` up
//! to `C_u`.
//!
//! Features are standardized internally with statistics taken from all
//! training rows, labeled and unlabeled.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gbdt::softmax;
use crate::weights::ProbMatrix;
use crate::{CtowError, Matrix, Result};

/// Slack below this counts as on the margin; the subgradient solver leaves
/// support vectors within about 1e-5 of it.
const SLACK_EPS: f64 = 1e-3;
const SWAP_TOL: f64 = 1e-12;
const CU_START: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TsvmConfig {
    pub c_labeled: f64,
    pub c_unlabeled: f64,
    pub temperature: f64,
    /// Cap on swap-and-retrain passes per penalty level.
    pub max_outer: usize,
    /// Subgradient epochs per SVM fit.
    pub epochs: usize,
}

impl Default for TsvmConfig {
    fn default() -> Self {
        Self {
            c_labeled: 1.0,
            c_unlabeled: 1.0,
            temperature: 1.0,
            max_outer: 20,
            epochs: 500,
        }
    }
}

impl TsvmConfig {
    fn validate(&self) -> Result<()> {
        if !(self.c_labeled > 0.0) || !(self.c_unlabeled >= 0.0) {
            return Err(CtowError::InvalidConfig(
                "TSVM needs c_labeled > 0 and c_unlabeled >= 0".into(),
            ));
        }
        if !(self.temperature > 0.0) {
            return Err(CtowError::InvalidConfig(
                "TSVM temperature must be positive".into(),
            ));
        }
        if self.epochs == 0 {
            return Err(CtowError::InvalidConfig(
                "TSVM needs at least one epoch".into(),
            ));
        }
        Ok(())
    }
}

/// Per-feature affine map `z = (x - mean) / scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            scale: vec![1.0; d],
        }
    }

    pub fn fit(x: &Matrix) -> Self {
        let (n, d) = (x.rows() as f64, x.cols());
        let mut mean = vec![0.0; d];
        for row in x.row_iter() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in x.row_iter() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn transform(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for i in 0..out.rows() {
            for ((v, m), s) in out.row_mut(i).iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
        out
    }
}

/// Decision function `f(z) = w . z + b` of one class-vs-rest subproblem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearUnit {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearUnit {
    pub fn decision(&self, z: &[f64]) -> f64 {
        dot(&self.weights, z) + self.bias
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TsvmModel {
    per_class: Vec<LinearUnit>,
    scaler: Standardizer,
    c_labeled: f64,
    c_unlabeled: f64,
    margin_density: f64,
    temperature: f64,
}

impl TsvmModel {
    /// Assembles a model from raw-feature-space units (no standardization).
    /// The margin density starts at zero; see [`TsvmModel::with_margin_density`].
    pub fn from_units(per_class: Vec<LinearUnit>, temperature: f64) -> Result<Self> {
        let d = per_class.first().map_or(0, |u| u.weights.len());
        if per_class.len() < 2 {
            return Err(CtowError::TooFewClasses(per_class.len()));
        }
        if let Some(u) = per_class.iter().find(|u| u.weights.len() != d) {
            return Err(CtowError::DimensionMismatch {
                expected: d,
                found: u.weights.len(),
            });
        }
        Ok(Self {
            per_class,
            scaler: Standardizer::identity(d),
            c_labeled: 1.0,
            c_unlabeled: 0.0,
            margin_density: 0.0,
            temperature,
        })
    }

    pub fn with_margin_density(mut self, features: &Matrix, labels: &[usize]) -> Result<Self> {
        self.margin_density = margin_density(&self, features, labels)?;
        Ok(self)
    }

    pub fn class_count(&self) -> usize {
        self.per_class.len()
    }

    pub fn n_features(&self) -> usize {
        self.scaler.mean.len()
    }

    pub fn units(&self) -> &[LinearUnit] {
        &self.per_class
    }

    pub fn margin_density(&self) -> f64 {
        self.margin_density
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn c_labeled(&self) -> f64 {
        self.c_labeled
    }

    pub fn c_unlabeled(&self) -> f64 {
        self.c_unlabeled
    }

    /// `rows x C` matrix of class-vs-rest decision values.
    pub fn decision_values(&self, rows: &Matrix) -> Result<Matrix> {
        if rows.cols() != self.n_features() {
            return Err(CtowError::DimensionMismatch {
                expected: self.n_features(),
                found: rows.cols(),
            });
        }
        let z = self.scaler.transform(rows);
        let c = self.per_class.len();
        let mut out = Matrix::zeros(rows.rows(), c);
        for i in 0..z.rows() {
            for (k, unit) in self.per_class.iter().enumerate() {
                out.set(i, k, unit.decision(z.row(i)));
            }
        }
        Ok(out)
    }

    /// Softmax of the decision values divided by the temperature.
    pub fn predict_proba(&self, rows: &Matrix) -> Result<ProbMatrix> {
        let mut dv = self.decision_values(rows)?;
        for i in 0..dv.rows() {
            let scaled: Vec<f64> = dv.row(i).iter().map(|v| v / self.temperature).collect();
            dv.row_mut(i).copy_from_slice(&softmax(&scaled));
        }
        ProbMatrix::new(dv)
    }
}

/// Fraction of labeled rows whose hinge slack in their own class-vs-rest
/// subproblem, `max(0, 1 - f_y(x))`, is positive.
pub fn margin_density(model: &TsvmModel, features: &Matrix, labels: &[usize]) -> Result<f64> {
    let dv = model.decision_values(features)?;
    margin_density_from_decisions(&dv, labels)
}

pub fn margin_density_from_decisions(decisions: &Matrix, labels: &[usize]) -> Result<f64> {
    if decisions.rows() != labels.len() {
        return Err(CtowError::LengthMismatch {
            left: decisions.rows(),
            right: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(CtowError::EmptyDataset);
    }
    let mut inside = 0usize;
    for (i, &y) in labels.iter().enumerate() {
        if y >= decisions.cols() {
            return Err(CtowError::BadIndex {
                index: y,
                len: decisions.cols(),
            });
        }
        if hinge(decisions.get(i, y)) > SLACK_EPS {
            inside += 1;
        }
    }
    Ok(inside as f64 / labels.len() as f64)
}

/// One accepted swap batch: the objective (at `c_unlabeled`) before the
/// swaps and after swapping and retraining.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwapStep {
    pub c_unlabeled: f64,
    pub swaps: usize,
    pub before: f64,
    pub after: f64,
}

/// Solution of one binary transductive subproblem in standardized space.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryFit {
    pub unit: LinearUnit,
    /// Final pseudo labels of the unlabeled rows, `+1` or `-1`.
    pub pseudo: Vec<f64>,
    pub trace: Vec<SwapStep>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TsvmFit {
    pub model: TsvmModel,
    /// Per class: the binary subproblem's swap trace and the number of
    /// positive pseudo labels after each batch.
    pub traces: Vec<BinaryFit>,
}

pub fn train_tsvm(
    labeled: &Matrix,
    labels: &[usize],
    class_count: usize,
    unlabeled: &Matrix,
    config: &TsvmConfig,
) -> Result<TsvmModel> {
    train_tsvm_traced(labeled, labels, class_count, unlabeled, config).map(|f| f.model)
}

/// Supervised linear SVM on the labeled rows alone.
pub fn train_svm(
    labeled: &Matrix,
    labels: &[usize],
    class_count: usize,
    config: &TsvmConfig,
) -> Result<TsvmModel> {
    let empty = Matrix::zeros(0, labeled.cols());
    train_tsvm(labeled, labels, class_count, &empty, config)
}

pub fn train_tsvm_traced(
    labeled: &Matrix,
    labels: &[usize],
    class_count: usize,
    unlabeled: &Matrix,
    config: &TsvmConfig,
) -> Result<TsvmFit> {
    config.validate()?;
    if labeled.rows() != labels.len() {
        return Err(CtowError::LengthMismatch {
            left: labeled.rows(),
            right: labels.len(),
        });
    }
    if unlabeled.rows() > 0 && unlabeled.cols() != labeled.cols() {
        return Err(CtowError::DimensionMismatch {
            expected: labeled.cols(),
            found: unlabeled.cols(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= class_count) {
        return Err(CtowError::BadIndex {
            index: bad,
            len: class_count,
        });
    }
    let mut present = labels.to_vec();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 || class_count < 2 {
        return Err(CtowError::SingleClass);
    }

    let all = labeled.vstack(&Matrix::new(
        unlabeled.rows(),
        labeled.cols(),
        unlabeled.as_slice().to_vec(),
    )?)?;
    let scaler = Standardizer::fit(&all);
    let zl = scaler.transform(labeled);
    let zu = scaler.transform(unlabeled);

    let fits: Vec<BinaryFit> = (0..class_count)
        .into_par_iter()
        .map(|c| {
            let y: Vec<f64> = labels
                .iter()
                .map(|&l| if l == c { 1.0 } else { -1.0 })
                .collect();
            fit_binary_transductive(&zl, &y, &zu, config)
        })
        .collect();

    let mut model = TsvmModel {
        per_class: fits.iter().map(|f| f.unit.clone()).collect(),
        scaler,
        c_labeled: config.c_labeled,
        c_unlabeled: config.c_unlabeled,
        margin_density: 0.0,
        temperature: config.temperature,
    };
    model.margin_density = margin_density(&model, labeled, labels)?;
    Ok(TsvmFit {
        model,
        traces: fits,
    })
}

/// Binary transductive problem on standardized rows with `y` in `{-1, +1}`.
pub fn fit_binary_transductive(
    zl: &Matrix,
    y: &[f64],
    zu: &Matrix,
    config: &TsvmConfig,
) -> BinaryFit {
    let l = zl.rows();
    let u = zu.rows();
    let labeled_cost = vec![config.c_labeled; l];
    let (w0, b0) = fit_linear_svm(zl, y, &labeled_cost, None, config.epochs);
    if u == 0 {
        return BinaryFit {
            unit: LinearUnit {
                weights: w0,
                bias: b0,
            },
            pseudo: Vec::new(),
            trace: Vec::new(),
        };
    }

    // pseudo labels keep the labeled positive fraction
    let pos_fraction = y.iter().filter(|&&v| v > 0.0).count() as f64 / l as f64;
    let n_pos = ((pos_fraction * u as f64).round() as usize).min(u);
    let scores: Vec<f64> = zu.row_iter().map(|z| dot(&w0, z) + b0).collect();
    let mut order: Vec<usize> = (0..u).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut pseudo = vec![-1.0; u];
    for &j in &order[..n_pos] {
        pseudo[j] = 1.0;
    }

    let all = zl.vstack(zu).expect("same column count");
    let mut targets: Vec<f64> = y.to_vec();
    targets.extend_from_slice(&pseudo);

    let mut trace = Vec::new();
    let mut w = w0;
    let mut b = b0;
    let mut cu = CU_START.min(config.c_unlabeled);
    loop {
        let mut cost = labeled_cost.clone();
        cost.extend(std::iter::repeat_n(cu, u));
        (w, b) = fit_linear_svm(&all, &targets, &cost, Some((&w, b)), config.epochs);

        for _ in 0..config.max_outer {
            let f: Vec<f64> = zu.row_iter().map(|z| dot(&w, z) + b).collect();
            let swaps = improving_swaps(&f, &targets[l..], cu);
            if swaps.is_empty() {
                break;
            }
            let before = svm_objective(&all, &targets, &cost, &w, b);
            for &(p, n) in &swaps {
                targets[l + p] = -1.0;
                targets[l + n] = 1.0;
            }
            (w, b) = fit_linear_svm(&all, &targets, &cost, Some((&w, b)), config.epochs);
            let after = svm_objective(&all, &targets, &cost, &w, b);
            trace.push(SwapStep {
                c_unlabeled: cu,
                swaps: swaps.len(),
                before,
                after,
            });
        }

        if cu >= config.c_unlabeled {
            break;
        }
        cu = (2.0 * cu).min(config.c_unlabeled);
    }

    BinaryFit {
        unit: LinearUnit {
            weights: w,
            bias: b,
        },
        pseudo: targets[l..].to_vec(),
        trace,
    }
}

/// Disjoint (positive, negative) pseudo-label pairs whose exchange strictly
/// lowers the unlabeled hinge loss at the current decision values `f`.
/// Pairs are formed greedily from the largest individual gains.
fn improving_swaps(f: &[f64], pseudo: &[f64], cu: f64) -> Vec<(usize, usize)> {
    if cu <= 0.0 {
        return Vec::new();
    }
    // loss change of flipping a single label
    let mut pos: Vec<(f64, usize)> = Vec::new();
    let mut neg: Vec<(f64, usize)> = Vec::new();
    for (j, (&fj, &yj)) in f.iter().zip(pseudo).enumerate() {
        let delta = hinge(-yj * fj) - hinge(yj * fj);
        if yj > 0.0 {
            pos.push((delta, j));
        } else {
            neg.push((delta, j));
        }
    }
    let by_delta = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    pos.sort_by(by_delta);
    neg.sort_by(by_delta);
    pos.iter()
        .zip(&neg)
        .take_while(|(p, n)| cu * (p.0 + n.0) < -SWAP_TOL)
        .map(|(p, n)| (p.1, n.1))
        .collect()
}

fn hinge(margin: f64) -> f64 {
    (1.0 - margin).max(0.0)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `1/2 ||w||^2 + sum_i cost_i hinge(y_i (w . x_i + b))`.
pub fn svm_objective(x: &Matrix, y: &[f64], cost: &[f64], w: &[f64], b: f64) -> f64 {
    let loss: f64 = x
        .row_iter()
        .zip(y)
        .zip(cost)
        .map(|((row, &yi), &ci)| ci * hinge(yi * (dot(w, row) + b)))
        .sum();
    0.5 * dot(w, w) + loss
}

/// Bias minimizing `sum_i cost_i hinge(y_i (s_i + b))` for fixed scores `s`.
/// The loss is convex and piecewise linear in `b` with a kink at
/// `y_i - s_i` per row, each kink raising the slope by `cost_i`; the
/// midpoint of the flat minimizing segment is returned.
fn optimal_bias(scores: &[f64], y: &[f64], cost: &[f64]) -> f64 {
    let mut kinks: Vec<(f64, f64)> = scores
        .iter()
        .zip(y)
        .zip(cost)
        .filter(|(_, &c)| c > 0.0)
        .map(|((&s, &yi), &c)| (yi - s, c))
        .collect();
    if kinks.is_empty() {
        return 0.0;
    }
    kinks.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = kinks.iter().map(|k| k.1).sum();
    let tol = 1e-12 * total;
    let mut slope: f64 = -y
        .iter()
        .zip(cost)
        .filter(|(&yi, &c)| yi > 0.0 && c > 0.0)
        .map(|(_, &c)| c)
        .sum::<f64>();

    let mut lo = None;
    if slope >= -tol {
        lo = Some(kinks[0].0);
    }
    for &(k, c) in &kinks {
        slope += c;
        if lo.is_none() && slope >= -tol {
            lo = Some(k);
        }
        if let Some(lo) = lo {
            if slope > tol {
                return 0.5 * (lo + k);
            }
        }
    }
    let last = kinks[kinks.len() - 1].0;
    0.5 * (lo.unwrap_or(last) + last)
}

/// Primal linear SVM by full-batch subgradient descent on `w` with step
/// `1/t`, re-solving the bias exactly after every step. Returns the iterate
/// with the lowest objective, where the warm start (if any) competes too.
fn fit_linear_svm(
    x: &Matrix,
    y: &[f64],
    cost: &[f64],
    warm: Option<(&[f64], f64)>,
    epochs: usize,
) -> (Vec<f64>, f64) {
    let (n, d) = (x.rows(), x.cols());
    let mut best_w = vec![0.0; d];
    let mut best_b = optimal_bias(&vec![0.0; n], y, cost);
    let mut best_obj = svm_objective(x, y, cost, &best_w, best_b);
    if let Some((w, b)) = warm {
        let obj = svm_objective(x, y, cost, w, b);
        if obj <= best_obj {
            best_w = w.to_vec();
            best_b = b;
            best_obj = obj;
        }
    }

    let mut w = vec![0.0; d];
    let mut scores = vec![0.0; n];
    for t in 1..=epochs {
        for (s, row) in scores.iter_mut().zip(x.row_iter()) {
            *s = dot(&w, row);
        }
        let b = optimal_bias(&scores, y, cost);
        let mut obj = 0.5 * dot(&w, &w);
        let mut sub = vec![0.0; d];
        for (i, row) in x.row_iter().enumerate() {
            let slack = hinge(y[i] * (scores[i] + b));
            if slack > 0.0 && cost[i] > 0.0 {
                obj += cost[i] * slack;
                let a = cost[i] * y[i];
                for (g, v) in sub.iter_mut().zip(row) {
                    *g += a * v;
                }
            }
        }
        if obj < best_obj {
            best_obj = obj;
            best_w.copy_from_slice(&w);
            best_b = b;
        }
        let step = 1.0 / t as f64;
        for (wj, gj) in w.iter_mut().zip(&sub) {
            *wj -= step * (*wj - gj);
        }
    }
    (best_w, best_b)
}
