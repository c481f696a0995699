//! Ensemble weights: entropy-plus-L2 objective over the unlabeled
//! predictions, the margin-density prior for the TSVM weight, Euclidean
//! projection onto the simplex, and the projected-gradient solver.

use serde::{Deserialize, Serialize};

use crate::{CtowError, Matrix, Result};

const ROW_SUM_TOL: f64 = 1e-6;
const WEIGHT_SUM_TOL: f64 = 1e-9;
const MAX_HALVINGS: usize = 30;

/// Row-stochastic `u x C` matrix of class probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Matrix", into = "Matrix")]
pub struct ProbMatrix(Matrix);

impl ProbMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        for (i, row) in m.row_iter().enumerate() {
            if let Some(v) = row
                .iter()
                .find(|v| !(**v >= -ROW_SUM_TOL && **v <= 1.0 + ROW_SUM_TOL))
            {
                return Err(CtowError::InvalidProbabilities(format!(
                    "row {i} has entry {v} outside [0, 1]"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(CtowError::InvalidProbabilities(format!(
                    "row {i} sums to {sum}"
                )));
            }
        }
        Ok(Self(m))
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn rows(&self) -> usize {
        self.0.rows()
    }

    pub fn classes(&self) -> usize {
        self.0.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.0.row(i)
    }

    /// Index of the largest entry per row, lowest class on ties.
    pub fn argmax(&self) -> Vec<usize> {
        self.0.row_iter().map(argmax).collect()
    }

    pub fn select_rows(&self, ids: &[usize]) -> ProbMatrix {
        ProbMatrix(self.0.select_rows(ids))
    }
}

impl TryFrom<Matrix> for ProbMatrix {
    type Error = CtowError;

    fn try_from(m: Matrix) -> Result<Self> {
        Self::new(m)
    }
}

impl From<ProbMatrix> for Matrix {
    fn from(p: ProbMatrix) -> Matrix {
        p.0
    }
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Ensemble weights on the probability simplex. When `fixed_last` is set the
/// last coordinate is pinned to exactly that value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    w: Vec<f64>,
    fixed_last: Option<f64>,
}

impl WeightVector {
    pub fn new(w: Vec<f64>, fixed_last: Option<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(CtowError::InvalidWeights("empty weight vector".into()));
        }
        if let Some(v) = w.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(CtowError::InvalidWeights(format!(
                "negative or non-finite weight {v}"
            )));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(CtowError::InvalidWeights(format!("weights sum to {sum}")));
        }
        if let Some(pin) = fixed_last {
            if w[w.len() - 1] != pin {
                return Err(CtowError::InvalidWeights(format!(
                    "last weight {} differs from pinned value {pin}",
                    w[w.len() - 1]
                )));
            }
        }
        Ok(Self { w, fixed_last })
    }

    pub fn uniform(k: usize) -> Self {
        Self {
            w: vec![1.0 / k as f64; k],
            fixed_last: None,
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn fixed_last(&self) -> Option<f64> {
        self.fixed_last
    }
}

/// Prior TSVM weight from its margin density: `1 / (1 + 3 e^{10 (xi - alpha)})`.
/// Large margin density pushes the weight towards zero.
pub fn prior_weight(xi_hat: f64, alpha: f64) -> f64 {
    1.0 / (1.0 + 3.0 * (10.0 * (xi_hat - alpha)).exp())
}

fn check_shapes(ps: &[ProbMatrix], k: usize) -> Result<()> {
    if ps.len() != k {
        return Err(CtowError::DimensionMismatch {
            expected: k,
            found: ps.len(),
        });
    }
    let first = ps.first().ok_or(CtowError::DimensionMismatch {
        expected: 1,
        found: 0,
    })?;
    for p in ps {
        if p.rows() != first.rows() {
            return Err(CtowError::DimensionMismatch {
                expected: first.rows(),
                found: p.rows(),
            });
        }
        if p.classes() != first.classes() {
            return Err(CtowError::DimensionMismatch {
                expected: first.classes(),
                found: p.classes(),
            });
        }
    }
    Ok(())
}

/// `sum_k w_k P_k` for arbitrary (not necessarily feasible) `w`.
fn mix(ps: &[ProbMatrix], w: &[f64]) -> Matrix {
    let (u, c) = (ps[0].rows(), ps[0].classes());
    let mut out = Matrix::zeros(u, c);
    for (p, &wk) in ps.iter().zip(w) {
        if wk == 0.0 {
            continue;
        }
        for i in 0..u {
            let src = p.row(i);
            for (o, s) in out.row_mut(i).iter_mut().zip(src) {
                *o += wk * s;
            }
        }
    }
    out
}

/// Convex combination of the learners' probability matrices.
pub fn ensemble_proba(ps: &[ProbMatrix], w: &WeightVector) -> Result<ProbMatrix> {
    check_shapes(ps, w.len())?;
    ProbMatrix::new(mix(ps, w.as_slice()))
}

/// Mean row entropy of `sum_k w_k P_k` (natural log, `0 ln 0 = 0`) plus
/// `mu ||w||^2`.
pub fn objective(ps: &[ProbMatrix], w: &[f64], mu: f64, epsilon_clip: f64) -> f64 {
    let mixed = mix(ps, w);
    let u = mixed.rows().max(1) as f64;
    let entropy: f64 = mixed
        .as_slice()
        .iter()
        .map(|&p| {
            if p > 0.0 {
                -p * p.max(epsilon_clip).ln()
            } else {
                0.0
            }
        })
        .sum();
    entropy / u + mu * w.iter().map(|v| v * v).sum::<f64>()
}

/// Gradient of [`objective`] with respect to `w`, with the mixed
/// probabilities clipped at `epsilon_clip` inside the log.
pub fn gradient(ps: &[ProbMatrix], w: &[f64], mu: f64, epsilon_clip: f64) -> Vec<f64> {
    let mixed = mix(ps, w);
    let u = mixed.rows().max(1) as f64;
    let factor: Vec<f64> = mixed
        .as_slice()
        .iter()
        .map(|&p| -(1.0 + p.max(epsilon_clip).ln()))
        .collect();
    ps.iter()
        .zip(w)
        .map(|(p, &wk)| {
            let dot: f64 = p
                .matrix()
                .as_slice()
                .iter()
                .zip(&factor)
                .map(|(a, b)| a * b)
                .sum();
            dot / u + 2.0 * mu * wk
        })
        .collect()
}

/// Euclidean projection of `x` onto `{v >= 0, sum v = total}` by the
/// sort-and-threshold rule `v_i = max(x_i - tau, 0)`.
pub fn project_simplex(x: &[f64], total: f64) -> Vec<f64> {
    if total <= 0.0 || x.is_empty() {
        return vec![0.0; x.len()];
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, &v) in sorted.iter().enumerate() {
        cumsum += v;
        let candidate = (cumsum - total) / (j + 1) as f64;
        if v - candidate > 0.0 {
            tau = candidate;
        }
    }
    x.iter().map(|&v| (v - tau).max(0.0)).collect()
}

/// Projected-gradient settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// L2 penalty on the weights.
    pub mu: f64,
    /// Number of projected-gradient steps.
    pub iterations: usize,
    /// Initial step of each backtracking search.
    pub step0: f64,
    /// Probability floor inside the log.
    pub epsilon_clip: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            mu: 0.5,
            iterations: 10,
            step0: 1.0,
            epsilon_clip: 1e-12,
        }
    }
}

/// Result of [`solve_weights_traced`].
#[derive(Clone, Debug, PartialEq)]
pub struct WeightSolve {
    pub weights: WeightVector,
    pub objective: f64,
    pub initial_objective: f64,
}

pub fn solve_weights(
    ps: &[ProbMatrix],
    fixed_last: Option<f64>,
    config: &SolverConfig,
) -> Result<WeightVector> {
    solve_weights_traced(ps, fixed_last, config).map(|s| s.weights)
}

/// Minimizes [`objective`] over the simplex (with the last coordinate pinned
/// when `fixed_last` is given) by `iterations` projected-gradient steps.
/// Each step backtracks from `step0`, halving until the objective does not
/// increase. The lowest-objective iterate is returned.
pub fn solve_weights_traced(
    ps: &[ProbMatrix],
    fixed_last: Option<f64>,
    config: &SolverConfig,
) -> Result<WeightSolve> {
    let k = ps.len();
    if k < 2 {
        return Err(CtowError::InvalidConfig(format!(
            "need at least 2 learners, got {k}"
        )));
    }
    check_shapes(ps, k)?;
    if config.iterations == 0 {
        return Err(CtowError::InvalidConfig(
            "solver needs at least one iteration".into(),
        ));
    }
    if let Some(pin) = fixed_last {
        if !(0.0..1.0).contains(&pin) {
            return Err(CtowError::InvalidFixedWeight(pin));
        }
    }

    let free = if fixed_last.is_some() { k - 1 } else { k };
    let free_total = 1.0 - fixed_last.unwrap_or(0.0);
    let assemble = |block: &[f64]| -> Vec<f64> {
        let mut w = block.to_vec();
        if let Some(pin) = fixed_last {
            w.push(pin);
        }
        w
    };
    let f = |w: &[f64]| objective(ps, w, config.mu, config.epsilon_clip);

    let mut current = assemble(&vec![free_total / free as f64; free]);
    let mut current_obj = f(&current);
    let initial_objective = current_obj;
    let mut best = current.clone();
    let mut best_obj = current_obj;

    for _ in 0..config.iterations {
        let grad = gradient(ps, &current, config.mu, config.epsilon_clip);
        let mut step = config.step0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let moved: Vec<f64> = current[..free]
                .iter()
                .zip(&grad)
                .map(|(w, g)| w - step * g)
                .collect();
            let candidate = assemble(&project_simplex(&moved, free_total));
            let obj = f(&candidate);
            if obj <= current_obj {
                accepted = Some((candidate, obj));
                break;
            }
            step *= 0.5;
        }
        let Some((next, obj)) = accepted else { break };
        current = next;
        current_obj = obj;
        if current_obj < best_obj {
            best = current.clone();
            best_obj = current_obj;
        }
    }

    Ok(WeightSolve {
        weights: WeightVector::new(best, fixed_last)?,
        objective: best_obj,
        initial_objective,
    })
}
