//! Gradient-boosted regression trees for multi-class classification.
//!
//! Each boosting round fits one tree per class to the second-order
//! statistics of the softmax cross-entropy loss (`g = p - 1{y = c}`,
//! `h = p (1 - p)`), using exact greedy split search over sorted feature
//! values and L2-regularized Newton leaf weights.

use serde::{Deserialize, Serialize};

use crate::weights::ProbMatrix;
use crate::{CtowError, Matrix, Result};

const MIN_HESSIAN: f64 = 1e-16;
const DEGENERATE_MASS: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbdtConfig {
    pub rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub l2_reg: f64,
    /// Minimum hessian sum per child. The hessian here is `p(1 - p)`, half
    /// of XGBoost's softmax hessian, so 0.5 admits the same children as
    /// XGBoost's default of 1.
    pub min_child_weight: f64,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        Self {
            rounds: 50,
            max_depth: 3,
            learning_rate: 0.3,
            l2_reg: 1.0,
            min_child_weight: 0.5,
        }
    }
}

impl GbdtConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(CtowError::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.l2_reg >= 0.0) || !(self.min_child_weight >= 0.0) {
            return Err(CtowError::InvalidConfig(
                "l2_reg and min_child_weight must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Tree node stored in a flat arena; the root is node 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    /// Rows with `x[feature] < threshold` go to `left`.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        weight: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] < threshold { left } else { right },
                TreeNode::Leaf { weight } => return weight,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match nodes[i] {
                TreeNode::Split { left, right, .. } => {
                    1 + walk(nodes, left).max(walk(nodes, right))
                }
                TreeNode::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Boosted multi-class model: `trees[c][d]` is the round-`d` tree of the
/// class-`c` score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    config: GbdtConfig,
    class_count: usize,
    n_features: usize,
    trees: Vec<Vec<Tree>>,
    /// Set when training saw a single class; the model then predicts that
    /// class with probability `1 - 1e-7`.
    degenerate: Option<usize>,
}

impl GbdtModel {
    /// Model with no trees, predicting the uniform distribution.
    pub fn empty(class_count: usize, n_features: usize, config: GbdtConfig) -> Self {
        Self {
            config,
            class_count,
            n_features,
            trees: vec![Vec::new(); class_count],
            degenerate: None,
        }
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn config(&self) -> &GbdtConfig {
        &self.config
    }

    pub fn trees(&self) -> &[Vec<Tree>] {
        &self.trees
    }

    pub fn rounds_completed(&self) -> usize {
        self.trees.first().map_or(0, Vec::len)
    }

    pub fn degenerate_class(&self) -> Option<usize> {
        self.degenerate
    }

    fn raw_scores(&self, x: &[f64]) -> Vec<f64> {
        self.trees
            .iter()
            .map(|class_trees| class_trees.iter().map(|t| t.predict(x)).sum())
            .collect()
    }

    pub fn predict_proba(&self, rows: &Matrix) -> Result<ProbMatrix> {
        if rows.cols() != self.n_features {
            return Err(CtowError::DimensionMismatch {
                expected: self.n_features,
                found: rows.cols(),
            });
        }
        let c = self.class_count;
        let mut out = Matrix::zeros(rows.rows(), c);
        for i in 0..rows.rows() {
            let probs = match self.degenerate {
                Some(class) => degenerate_row(class, c),
                None => softmax(&self.raw_scores(rows.row(i))),
            };
            out.row_mut(i).copy_from_slice(&probs);
        }
        ProbMatrix::new(out)
    }
}

fn degenerate_row(class: usize, c: usize) -> Vec<f64> {
    let other = DEGENERATE_MASS / (c - 1) as f64;
    let mut row = vec![other; c];
    row[class] = 1.0 - DEGENERATE_MASS;
    row
}

pub(crate) fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn train_gbdt(
    features: &Matrix,
    labels: &[usize],
    class_count: usize,
    config: &GbdtConfig,
) -> Result<GbdtModel> {
    train_gbdt_traced(features, labels, class_count, config).map(|(m, _)| m)
}

/// Like [`train_gbdt`], also returning the mean training softmax loss before
/// the first round and after every round.
pub fn train_gbdt_traced(
    features: &Matrix,
    labels: &[usize],
    class_count: usize,
    config: &GbdtConfig,
) -> Result<(GbdtModel, Vec<f64>)> {
    config.validate()?;
    if features.rows() != labels.len() {
        return Err(CtowError::LengthMismatch {
            left: features.rows(),
            right: labels.len(),
        });
    }
    if features.rows() == 0 {
        return Err(CtowError::EmptyDataset);
    }
    if class_count < 2 {
        return Err(CtowError::TooFewClasses(class_count));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= class_count) {
        return Err(CtowError::BadIndex {
            index: bad,
            len: class_count,
        });
    }

    let mut model = GbdtModel::empty(class_count, features.cols(), config.clone());
    if labels.iter().all(|&y| y == labels[0]) {
        model.degenerate = Some(labels[0]);
        return Ok((model, Vec::new()));
    }

    let n = features.rows();
    let sorted = presort(features);
    let mut scores = vec![0.0; n * class_count];
    let mut trace = vec![softmax_loss(&scores, labels, class_count)];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];

    for _ in 0..config.rounds {
        let probs: Vec<Vec<f64>> = (0..n)
            .map(|i| softmax(&scores[i * class_count..(i + 1) * class_count]))
            .collect();
        let mut round_trees = Vec::with_capacity(class_count);
        for c in 0..class_count {
            for (i, (row, &y)) in probs.iter().zip(labels).enumerate() {
                let p = row[c];
                grad[i] = p - if y == c { 1.0 } else { 0.0 };
                hess[i] = (p * (1.0 - p)).max(MIN_HESSIAN);
            }
            round_trees.push(grow_tree(features, &sorted, &grad, &hess, config));
        }
        for (c, tree) in round_trees.into_iter().enumerate() {
            for i in 0..n {
                scores[i * class_count + c] += tree.predict(features.row(i));
            }
            model.trees[c].push(tree);
        }
        trace.push(softmax_loss(&scores, labels, class_count));
    }
    Ok((model, trace))
}

/// Mean cross-entropy of the softmax of `scores` (row-major `n x C`).
pub fn softmax_loss(scores: &[f64], labels: &[usize], class_count: usize) -> f64 {
    let n = labels.len();
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let row = &scores[i * class_count..(i + 1) * class_count];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
            lse - row[y]
        })
        .sum();
    total / n as f64
}

/// Row indices sorted by each feature's value (stable, so equal values keep
/// row order).
fn presort(x: &Matrix) -> Vec<Vec<usize>> {
    (0..x.cols())
        .map(|f| {
            let mut idx: Vec<usize> = (0..x.rows()).collect();
            idx.sort_by(|&a, &b| x.get(a, f).total_cmp(&x.get(b, f)));
            idx
        })
        .collect()
}

struct BuildNode {
    grad: f64,
    hess: f64,
    split: Option<(usize, f64, usize, usize)>,
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
    left_grad: f64,
    left_hess: f64,
}

#[derive(Clone, Copy)]
struct ScanState {
    grad: f64,
    hess: f64,
    last: Option<f64>,
}

fn gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64) -> f64 {
    0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda)
        - (gl + gr) * (gl + gr) / (hl + hr + lambda))
}

/// Grows one tree level by level. At each level every feature is scanned
/// once in sorted order, accumulating left-side statistics for all open
/// nodes at the same time. Ties in gain keep the first candidate seen,
/// i.e. the lowest feature index and then the lowest threshold.
fn grow_tree(
    x: &Matrix,
    sorted: &[Vec<usize>],
    grad: &[f64],
    hess: &[f64],
    config: &GbdtConfig,
) -> Tree {
    let n = x.rows();
    let lambda = config.l2_reg;
    let mut nodes = vec![BuildNode {
        grad: grad.iter().sum(),
        hess: hess.iter().sum(),
        split: None,
    }];
    let mut position = vec![0usize; n];
    let mut open: Vec<usize> = if config.max_depth > 0 {
        vec![0]
    } else {
        Vec::new()
    };

    for depth in 0..config.max_depth {
        if open.is_empty() {
            break;
        }
        let mut slot = vec![usize::MAX; nodes.len()];
        for (s, &node) in open.iter().enumerate() {
            slot[node] = s;
        }
        let mut best: Vec<Option<Candidate>> = vec![None; open.len()];

        for (f, order) in sorted.iter().enumerate() {
            let mut state = vec![
                ScanState {
                    grad: 0.0,
                    hess: 0.0,
                    last: None,
                };
                open.len()
            ];
            for &r in order {
                let s = slot[position[r]];
                if s == usize::MAX {
                    continue;
                }
                let v = x.get(r, f);
                let st = &mut state[s];
                if let Some(last) = st.last {
                    if v > last {
                        let node = &nodes[open[s]];
                        let (gl, hl) = (st.grad, st.hess);
                        let (gr, hr) = (node.grad - gl, node.hess - hl);
                        if hl >= config.min_child_weight && hr >= config.min_child_weight {
                            let g = gain(gl, hl, gr, hr, lambda);
                            if g > 0.0 && best[s].is_none_or(|b| g > b.gain) {
                                let mut threshold = 0.5 * (last + v);
                                if threshold <= last {
                                    threshold = v;
                                }
                                best[s] = Some(Candidate {
                                    gain: g,
                                    feature: f,
                                    threshold,
                                    left_grad: gl,
                                    left_hess: hl,
                                });
                            }
                        }
                    }
                }
                st.grad += grad[r];
                st.hess += hess[r];
                st.last = Some(v);
            }
        }

        let mut next_open = Vec::new();
        for (s, &node) in open.iter().enumerate() {
            let Some(c) = best[s] else { continue };
            let left = nodes.len();
            let right = left + 1;
            let (pg, ph) = (nodes[node].grad, nodes[node].hess);
            nodes.push(BuildNode {
                grad: c.left_grad,
                hess: c.left_hess,
                split: None,
            });
            nodes.push(BuildNode {
                grad: pg - c.left_grad,
                hess: ph - c.left_hess,
                split: None,
            });
            nodes[node].split = Some((c.feature, c.threshold, left, right));
            if depth + 1 < config.max_depth {
                next_open.push(left);
                next_open.push(right);
            }
        }
        for r in 0..n {
            if let Some((f, thr, left, right)) = nodes[position[r]].split {
                position[r] = if x.get(r, f) < thr { left } else { right };
            }
        }
        open = next_open;
    }

    let nodes = nodes
        .into_iter()
        .map(|b| match b.split {
            Some((feature, threshold, left, right)) => TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            },
            None => TreeNode::Leaf {
                weight: -config.learning_rate * b.grad / (b.hess + lambda),
            },
        })
        .collect();
    Tree { nodes }
}
