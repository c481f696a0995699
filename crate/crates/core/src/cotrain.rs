//! The co-training loop.
//!
//! `K - 1` boosted-tree learners start from different bootstraps of the
//! labeled set and the `K`-th learner is a transductive SVM trained once on
//! all training rows. Every round the ensemble weights are re-solved on the
//! learners' unlabeled predictions; each tree learner then receives the
//! confident pseudo labels of the other learners' weighted vote on a random
//! subset of the unlabeled rows and is retrained on the labeled set plus
//! those pseudo labels. The loop stops once no learner's pseudo batch
//! changes between rounds.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SplitPlan};
use crate::gbdt::{train_gbdt, GbdtConfig, GbdtModel};
use crate::tsvm::{train_tsvm, TsvmConfig, TsvmModel};
use crate::weights::{
    argmax, ensemble_proba, prior_weight, solve_weights_traced, ProbMatrix, SolverConfig,
    WeightVector,
};
use crate::{rng, CtowError, Matrix, Result};

const BOOTSTRAP_ATTEMPTS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CotrainConfig {
    pub k_learners: usize,
    /// Confidence threshold for pseudo labels.
    pub beta: f64,
    /// Margin-density threshold of the prior TSVM weight.
    pub alpha: f64,
    pub mu: f64,
    /// Projected-gradient steps per weight solve.
    pub t_inner: usize,
    pub step0: f64,
    pub epsilon_clip: f64,
    /// Fraction of the unlabeled rows offered to each learner per round.
    pub bootstrap_fraction: f64,
    pub max_rounds: usize,
    pub seed: u64,
    /// Pin the TSVM weight to the margin-density prior.
    pub use_prior: bool,
    /// Use a TSVM as the last learner; otherwise all `K` learners are trees.
    pub use_tsvm: bool,
    /// Rescale leave-one-out probabilities by `1 / (1 - w_k)` before the
    /// confidence test.
    pub normalize_loo: bool,
    pub gbdt: GbdtConfig,
    pub tsvm: TsvmConfig,
}

impl Default for CotrainConfig {
    fn default() -> Self {
        Self {
            k_learners: 4,
            beta: 0.75,
            alpha: 0.2,
            mu: 0.5,
            t_inner: 10,
            step0: 1.0,
            epsilon_clip: 1e-12,
            bootstrap_fraction: 0.8,
            max_rounds: 20,
            seed: 0,
            use_prior: true,
            use_tsvm: true,
            normalize_loo: false,
            gbdt: GbdtConfig::default(),
            tsvm: TsvmConfig::default(),
        }
    }
}

impl CotrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CtowError::InvalidConfig(m));
        if self.k_learners < 2 {
            return bad(format!("need K >= 2 learners, got {}", self.k_learners));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bad(format!("beta {} outside (0, 1]", self.beta));
        }
        if !(self.bootstrap_fraction > 0.0 && self.bootstrap_fraction <= 1.0) {
            return bad(format!(
                "bootstrap fraction {} outside (0, 1]",
                self.bootstrap_fraction
            ));
        }
        if self.max_rounds == 0 {
            return bad("max_rounds must be at least 1".into());
        }
        if self.t_inner == 0 {
            return bad("inner iterations must be at least 1".into());
        }
        if !(self.mu >= 0.0) || !(self.step0 > 0.0) {
            return bad("need mu >= 0 and step0 > 0".into());
        }
        Ok(())
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            mu: self.mu,
            iterations: self.t_inner,
            step0: self.step0,
            epsilon_clip: self.epsilon_clip,
        }
    }

    fn tree_learners(&self) -> usize {
        if self.use_tsvm {
            self.k_learners - 1
        } else {
            self.k_learners
        }
    }
}

/// A trained base learner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
pub enum Learner {
    Gbdt(GbdtModel),
    Tsvm(TsvmModel),
}

impl Learner {
    pub fn predict_proba(&self, rows: &Matrix) -> Result<ProbMatrix> {
        match self {
            Learner::Gbdt(m) => m.predict_proba(rows),
            Learner::Tsvm(m) => m.predict_proba(rows),
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            Learner::Gbdt(m) => m.n_features(),
            Learner::Tsvm(m) => m.n_features(),
        }
    }

    pub fn as_tsvm(&self) -> Option<&TsvmModel> {
        match self {
            Learner::Tsvm(m) => Some(m),
            Learner::Gbdt(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabel {
    /// Dataset row id of the unlabeled row.
    pub row_id: usize,
    pub label: usize,
    pub confidence: f64,
}

/// Confident pseudo labels proposed to one learner in one round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PseudoBatch {
    pub learner_index: usize,
    pub entries: Vec<PseudoLabel>,
}

impl PseudoBatch {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `(row id, label)` pairs; two batches with equal keys teach the same
    /// thing.
    pub fn key(&self) -> Vec<(usize, usize)> {
        self.entries.iter().map(|e| (e.row_id, e.label)).collect()
    }
}

/// Per-round record of the solver and the pseudo-labeling step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub weights: Vec<f64>,
    pub fixed_last: Option<f64>,
    pub margin_density: Option<f64>,
    pub objective: f64,
    pub initial_objective: f64,
    /// One entry per tree learner.
    pub pseudo_batch_sizes: Vec<usize>,
    pub retrained: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CotrainModel {
    pub learners: Vec<Learner>,
    pub weights: WeightVector,
    pub rounds_run: usize,
    pub class_count: usize,
    pub n_features: usize,
    pub history: Vec<RoundRecord>,
}

impl CotrainModel {
    pub fn tsvm(&self) -> Option<&TsvmModel> {
        self.learners.iter().find_map(Learner::as_tsvm)
    }

    /// Weighted ensemble probabilities over all learners and the argmax
    /// label per row (lowest class on ties).
    pub fn predict(&self, rows: &Matrix) -> Result<(ProbMatrix, Vec<usize>)> {
        if rows.cols() != self.n_features {
            return Err(CtowError::DimensionMismatch {
                expected: self.n_features,
                found: rows.cols(),
            });
        }
        let ps = self
            .learners
            .iter()
            .map(|l| l.predict_proba(rows))
            .collect::<Result<Vec<_>>>()?;
        let p = ensemble_proba(&ps, &self.weights)?;
        let labels = p.argmax();
        Ok((p, labels))
    }
}

/// Learners after initialization and their predictions on the unlabeled rows
/// (in `split.unlabeled_ids` order).
#[derive(Clone, Debug)]
pub struct Initialized {
    pub learners: Vec<Learner>,
    pub probs: Vec<ProbMatrix>,
}

/// Bootstrap of `labeled` (with replacement, same size) containing every
/// class at least once. `learner` selects the random stream.
pub fn class_covering_bootstrap(
    labeled: &[usize],
    ds: &Dataset,
    seed: u64,
    learner: usize,
) -> Vec<usize> {
    let mut rng = rng::stream(seed, &[1, learner as u64]);
    let l = labeled.len();
    let classes = ds.class_count();
    let covers = |sample: &[usize]| {
        let mut seen = vec![false; classes];
        for &i in sample {
            seen[ds.label(i).expect("labeled row")] = true;
        }
        seen
    };
    let mut sample = Vec::new();
    for _ in 0..BOOTSTRAP_ATTEMPTS {
        sample = (0..l).map(|_| labeled[rng.gen_range(0..l)]).collect();
        if covers(&sample).iter().all(|&s| s) {
            return sample;
        }
    }
    // force one row of each missing class into positions whose class repeats
    let present_in_l = covers(labeled);
    let seen = covers(&sample);
    for c in (0..classes).filter(|&c| !seen[c] && present_in_l[c]) {
        let donor = *labeled
            .iter()
            .find(|&&i| ds.label(i) == Some(c))
            .expect("class present in labeled set");
        let mut counts = vec![0usize; classes];
        for &i in &sample {
            counts[ds.label(i).expect("labeled row")] += 1;
        }
        if let Some(pos) = sample
            .iter()
            .position(|&i| counts[ds.label(i).expect("labeled row")] > 1)
        {
            sample[pos] = donor;
        }
    }
    sample
}

fn check_split(ds: &Dataset, split: &SplitPlan) -> Result<()> {
    for &i in split
        .labeled_ids
        .iter()
        .chain(&split.unlabeled_ids)
        .chain(&split.test_ids)
    {
        if i >= ds.n_rows() {
            return Err(CtowError::BadIndex {
                index: i,
                len: ds.n_rows(),
            });
        }
    }
    if split.labeled_ids.len() < ds.class_count() {
        return Err(CtowError::InvalidConfig(format!(
            "{} labeled rows cannot cover {} classes",
            split.labeled_ids.len(),
            ds.class_count()
        )));
    }
    Ok(())
}

pub fn initialize(ds: &Dataset, split: &SplitPlan, config: &CotrainConfig) -> Result<Initialized> {
    config.validate()?;
    check_split(ds, split)?;
    let labeled_y = ds.labels_of(&split.labeled_ids)?;
    let unlabeled_x = ds.features().select_rows(&split.unlabeled_ids);
    let trees = config.tree_learners();

    let mut learners = (0..trees)
        .into_par_iter()
        .map(|k| {
            let sample = class_covering_bootstrap(&split.labeled_ids, ds, config.seed, k);
            let y = ds.labels_of(&sample)?;
            let x = ds.features().select_rows(&sample);
            train_gbdt(&x, &y, ds.class_count(), &config.gbdt).map(Learner::Gbdt)
        })
        .collect::<Result<Vec<_>>>()?;
    if config.use_tsvm {
        let lx = ds.features().select_rows(&split.labeled_ids);
        let tsvm = train_tsvm(
            &lx,
            &labeled_y,
            ds.class_count(),
            &unlabeled_x,
            &config.tsvm,
        )?;
        learners.push(Learner::Tsvm(tsvm));
    }
    let probs = learners
        .iter()
        .map(|l| l.predict_proba(&unlabeled_x))
        .collect::<Result<Vec<_>>>()?;
    Ok(Initialized { learners, probs })
}

/// `sum_{s != k} w_s P_s` on the rows `subset` (positions into the
/// probability matrices). Rows sum to `1 - w_k`.
pub fn leave_one_out_proba(
    ps: &[ProbMatrix],
    w: &WeightVector,
    k: usize,
    subset: &[usize],
) -> Result<Matrix> {
    if k >= ps.len() || ps.len() != w.len() {
        return Err(CtowError::BadIndex {
            index: k,
            len: ps.len().min(w.len()),
        });
    }
    let u = ps[0].rows();
    let c = ps[0].classes();
    let mut out = Matrix::zeros(subset.len(), c);
    for (r, &i) in subset.iter().enumerate() {
        if i >= u {
            return Err(CtowError::BadIndex { index: i, len: u });
        }
        for (s, (p, &ws)) in ps.iter().zip(w.as_slice()).enumerate() {
            if s == k {
                continue;
            }
            for (o, v) in out.row_mut(r).iter_mut().zip(p.row(i)) {
                *o += ws * v;
            }
        }
    }
    Ok(out)
}

/// Keeps rows of `pbar` whose largest entry is at least `beta`; the label is
/// the argmax (lowest class on ties). `row_ids[r]` names row `r` of `pbar`.
pub fn select_pseudo(
    pbar: &Matrix,
    row_ids: &[usize],
    beta: f64,
    learner_index: usize,
) -> Result<PseudoBatch> {
    if pbar.rows() != row_ids.len() {
        return Err(CtowError::LengthMismatch {
            left: pbar.rows(),
            right: row_ids.len(),
        });
    }
    let entries = pbar
        .row_iter()
        .zip(row_ids)
        .filter_map(|(row, &id)| {
            let label = argmax(row);
            (row[label] >= beta).then(|| PseudoLabel {
                row_id: id,
                label,
                confidence: row[label],
            })
        })
        .collect();
    Ok(PseudoBatch {
        learner_index,
        entries,
    })
}

/// `floor(fraction * u)` distinct positions in `0..u`, sorted.
fn draw_subset(u: usize, fraction: f64, seed: u64, round: usize, learner: usize) -> Vec<usize> {
    let size = ((fraction * u as f64) + 1e-9).floor() as usize;
    let mut rng = rng::stream(seed, &[2, round as u64, learner as u64]);
    let mut subset = index::sample(&mut rng, u, size.min(u)).into_vec();
    subset.sort_unstable();
    subset
}

fn retrain_tree(
    ds: &Dataset,
    labeled_ids: &[usize],
    batch: &PseudoBatch,
    config: &GbdtConfig,
) -> Result<GbdtModel> {
    let mut ids = labeled_ids.to_vec();
    let mut y = ds.labels_of(labeled_ids)?;
    for e in &batch.entries {
        ids.push(e.row_id);
        y.push(e.label);
    }
    let x = ds.features().select_rows(&ids);
    train_gbdt(&x, &y, ds.class_count(), config)
}

pub fn run_cotraining(
    ds: &Dataset,
    split: &SplitPlan,
    config: &CotrainConfig,
) -> Result<CotrainModel> {
    let Initialized {
        mut learners,
        mut probs,
    } = initialize(ds, split, config)?;
    let unlabeled_x = ds.features().select_rows(&split.unlabeled_ids);
    let u = split.unlabeled_ids.len();
    let trees = config.tree_learners();
    let solver = config.solver();

    let margin_density = learners
        .iter()
        .find_map(Learner::as_tsvm)
        .map(TsvmModel::margin_density);
    let fixed_last = match margin_density {
        Some(xi) if config.use_prior => Some(prior_weight(xi, config.alpha)),
        _ => None,
    };

    // batch each tree learner was last trained with; the bootstrap start
    // counts as the empty batch
    let mut trained_with: Vec<Vec<(usize, usize)>> = vec![Vec::new(); trees];
    let mut previous: Option<Vec<Vec<(usize, usize)>>> = None;
    let mut history = Vec::new();
    let mut weights = WeightVector::uniform(learners.len());
    let mut changed_last_round = false;
    let mut rounds_run = 0;

    for round in 1..=config.max_rounds {
        rounds_run = round;
        let solve = solve_weights_traced(&probs, fixed_last, &solver)?;
        weights = solve.weights;

        let outcomes = (0..trees)
            .into_par_iter()
            .map(|k| {
                let subset = draw_subset(u, config.bootstrap_fraction, config.seed, round, k);
                let mut pbar = leave_one_out_proba(&probs, &weights, k, &subset)?;
                if config.normalize_loo {
                    let keep = 1.0 - weights.as_slice()[k];
                    if keep > 0.0 {
                        for i in 0..pbar.rows() {
                            pbar.row_mut(i).iter_mut().for_each(|v| *v /= keep);
                        }
                    }
                }
                let ids: Vec<usize> = subset.iter().map(|&i| split.unlabeled_ids[i]).collect();
                let batch = select_pseudo(&pbar, &ids, config.beta, k)?;
                let key = batch.key();
                let model = if key != trained_with[k] {
                    Some(retrain_tree(ds, &split.labeled_ids, &batch, &config.gbdt)?)
                } else {
                    None
                };
                Ok((key, model))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut keys = Vec::with_capacity(trees);
        let mut retrained = Vec::with_capacity(trees);
        for (k, (key, model)) in outcomes.into_iter().enumerate() {
            retrained.push(model.is_some());
            if let Some(m) = model {
                let learner = Learner::Gbdt(m);
                probs[k] = learner.predict_proba(&unlabeled_x)?;
                learners[k] = learner;
                trained_with[k] = key.clone();
            }
            keys.push(key);
        }
        changed_last_round = retrained.iter().any(|&r| r);

        history.push(RoundRecord {
            round,
            weights: weights.as_slice().to_vec(),
            fixed_last,
            margin_density,
            objective: solve.objective,
            initial_objective: solve.initial_objective,
            pseudo_batch_sizes: keys.iter().map(Vec::len).collect(),
            retrained,
        });

        if previous.as_ref() == Some(&keys) {
            break;
        }
        previous = Some(keys);
    }

    if changed_last_round {
        weights = solve_weights_traced(&probs, fixed_last, &solver)?.weights;
    }

    Ok(CotrainModel {
        learners,
        weights,
        rounds_run,
        class_count: ds.class_count(),
        n_features: ds.n_features(),
        history,
    })
}
