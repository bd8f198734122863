//! Streaming factorization of debiased ratings and prediction from the last
//! code of each user.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::bias::{fit_biases, BiasModel, DEFAULT_BIAS_ITERS, DEFAULT_EPS_B};
use super::ingest::RatingsDataset;
use crate::bench::checkpoint::Checkpoint;
use crate::code::{Code, CodeSolver, Penalty};
use crate::data::SparseColumns;
use crate::dict::{Dictionary, ProjectionMode};
use crate::error::{ModlError, Result};
use crate::learner::{Learner, LearnerConfig, Metrics, TrajectoryRecord};
use crate::proj::Norm;

/// Last code computed for each column and the iteration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeCache {
    k: usize,
    alpha: Vec<f64>,
    /// 0 when the column was never drawn.
    last_t: Vec<u64>,
}

impl CodeCache {
    pub fn new(n: usize, k: usize) -> Self {
        CodeCache {
            k,
            alpha: vec![0.0; n * k],
            last_t: vec![0; n],
        }
    }

    pub fn n(&self) -> usize {
        self.last_t.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn store(&mut self, col: usize, code: &Code, t: u64) {
        debug_assert!(t > 0);
        self.alpha[col * self.k..(col + 1) * self.k].copy_from_slice(&code.alpha);
        self.last_t[col] = t;
    }

    pub fn get(&self, col: usize) -> Option<&[f64]> {
        (self.last_t[col] > 0).then(|| &self.alpha[col * self.k..(col + 1) * self.k])
    }

    /// Iteration of the last update, if any.
    pub fn last_update(&self, col: usize) -> Option<u64> {
        (self.last_t[col] > 0).then_some(self.last_t[col])
    }

    /// Number of columns with a code.
    pub fn coverage(&self) -> usize {
        self.last_t.iter().filter(|&&t| t > 0).count()
    }

    pub(crate) fn raw_parts(&self) -> (&[f64], &[u64]) {
        (&self.alpha, &self.last_t)
    }

    pub(crate) fn from_raw_parts(k: usize, alpha: Vec<f64>, last_t: Vec<u64>) -> Result<Self> {
        if alpha.len() != k * last_t.len() {
            return Err(ModlError::Checkpoint("code cache segment shapes disagree".into()));
        }
        Ok(CodeCache { k, alpha, last_t })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionConfig {
    pub k: usize,
    pub penalty: Penalty,
    pub norm: Norm,
    pub mode: ProjectionMode,
    pub beta: f64,
    /// `None` uses `max(1, n / 100)`.
    pub batch_size: Option<usize>,
    #[serde(with = "crate::serde_float")]
    pub max_epochs: f64,
    #[serde(with = "crate::serde_float")]
    pub epsilon: f64,
    pub eval_interval: Option<usize>,
    pub seed: u64,
    pub eps_b: f64,
    pub bias_iters: usize,
    /// Clip predictions to the training rating range.
    pub clip: bool,
    pub solver: CodeSolver,
}

impl Default for CompletionConfig {
    fn default() -> Self {
        CompletionConfig {
            k: 30,
            penalty: Penalty::ridge(0.1),
            norm: Norm::L2,
            mode: ProjectionMode::ExactLazy,
            beta: 0.9,
            batch_size: None,
            max_epochs: 30.0,
            epsilon: 1e-6,
            eval_interval: None,
            seed: 0,
            eps_b: DEFAULT_EPS_B,
            bias_iters: DEFAULT_BIAS_ITERS,
            clip: true,
            solver: CodeSolver::default(),
        }
    }
}

impl CompletionConfig {
    /// Learner settings for `n` user columns, masks being the observed
    /// ratings themselves.
    pub fn learner_config(&self, n: usize) -> LearnerConfig {
        let mut cfg = LearnerConfig::new(self.k, self.penalty, self.norm);
        cfg.mode = self.mode;
        cfg.reduction = 1;
        cfg.batch_size = self.batch_size.unwrap_or((n / 100).max(1)).min(n.max(1));
        cfg.beta = self.beta;
        cfg.epsilon = self.epsilon;
        cfg.max_epochs = self.max_epochs;
        cfg.eval_interval = self.eval_interval;
        cfg.seed = self.seed;
        cfg.solver = self.solver;
        cfg
    }
}

/// Training ratings minus their bias prediction, one sparse column per user.
pub fn residual_columns(dataset: &RatingsDataset, biases: &BiasModel) -> SparseColumns {
    let columns = dataset
        .train
        .iter()
        .enumerate()
        .map(|(u, l)| l.iter().map(|&(i, r)| (i, r - biases.predict(u, i))).collect())
        .collect();
    SparseColumns::new(dataset.p, columns)
}

/// Rating predictions `μ + b_u + b_i + (D α_u)[i]`.
pub struct Predictor<'a> {
    pub biases: &'a BiasModel,
    pub dictionary: Array2<f64>,
    pub codes: Option<&'a CodeCache>,
    pub clip: Option<(f64, f64)>,
}

impl<'a> Predictor<'a> {
    pub fn new(biases: &'a BiasModel, dict: &Dictionary, codes: Option<&'a CodeCache>, clip: Option<(f64, f64)>) -> Self {
        Predictor {
            biases,
            dictionary: dict.to_matrix(),
            codes,
            clip,
        }
    }

    /// Bias-only predictions.
    pub fn bias_only(biases: &'a BiasModel, p: usize, clip: Option<(f64, f64)>) -> Self {
        Predictor {
            biases,
            dictionary: Array2::zeros((p, 0)),
            codes: None,
            clip,
        }
    }

    /// `None` when a code model is in use and the user has no code yet.
    pub fn predict(&self, user: usize, item: usize) -> Option<f64> {
        let mut v = self.biases.predict(user, item);
        if let Some(codes) = self.codes {
            let alpha = codes.get(user)?;
            let row = self.dictionary.row(item);
            v += row.iter().zip(alpha).map(|(d, a)| d * a).sum::<f64>();
        }
        Some(match self.clip {
            Some((lo, hi)) => v.clamp(lo, hi),
            None => v,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmseReport {
    /// `None` when no test rating could be scored.
    pub rmse: Option<f64>,
    pub scored: usize,
    /// Test ratings of users with training data but no code yet.
    pub uncovered: usize,
    /// Users with test ratings and no training ratings.
    pub cold_start_users: usize,
}

/// `sqrt(mean((p − t)²))`
pub fn rmse(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(ModlError::EmptyInput("no predictions to score".into()));
    }
    if predictions.len() != truths.len() {
        return Err(ModlError::Dimension(format!(
            "{} predictions for {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    let sum: f64 = predictions.iter().zip(truths).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sum / predictions.len() as f64).sqrt())
}

/// Scores `predictor` on the test ratings of users present in training.
pub fn evaluate(dataset: &RatingsDataset, predictor: &Predictor) -> RmseReport {
    let mut preds = Vec::new();
    let mut truths = Vec::new();
    let mut uncovered = 0;
    for u in 0..dataset.n {
        if dataset.train[u].is_empty() {
            continue;
        }
        for &(i, r) in &dataset.test[u] {
            match predictor.predict(u, i) {
                Some(v) => {
                    preds.push(v);
                    truths.push(r);
                }
                None => uncovered += 1,
            }
        }
    }
    RmseReport {
        rmse: rmse(&preds, &truths).ok(),
        scored: preds.len(),
        uncovered,
        cold_start_users: dataset.cold_start_users(),
    }
}

#[derive(Debug, Clone)]
pub struct CompletionOutput {
    pub dictionary: Dictionary,
    pub codes: CodeCache,
    pub biases: BiasModel,
    pub trajectory: Vec<TrajectoryRecord>,
    pub report: RmseReport,
    pub iterations: u64,
    /// Final learner state with the bias model attached.
    pub checkpoint: Checkpoint,
}

pub(crate) fn clip_range(dataset: &RatingsDataset, config: &CompletionConfig) -> Option<(f64, f64)> {
    config.clip.then_some((dataset.min_rating, dataset.max_rating))
}

/// Debiases, factorizes the residuals and records test RMSE at every
/// trajectory point.
pub fn complete(dataset: &RatingsDataset, config: &CompletionConfig) -> Result<CompletionOutput> {
    let biases = fit_biases(dataset, config.eps_b, config.bias_iters);
    complete_with_biases(dataset, config, biases)
}

pub fn complete_with_biases(dataset: &RatingsDataset, config: &CompletionConfig, biases: BiasModel) -> Result<CompletionOutput> {
    if dataset.n < config.k {
        return Err(ModlError::InsufficientData(format!(
            "{} users for {} atoms",
            dataset.n, config.k
        )));
    }
    let residuals = residual_columns(dataset, &biases);
    let clip = clip_range(dataset, config);
    let mut learner = Learner::new(config.learner_config(dataset.n), &residuals)?.track_codes();
    learner.run(|l| {
        let predictor = Predictor::new(&biases, l.dictionary(), l.code_cache(), clip);
        Ok(Metrics {
            test_objective: None,
            rmse: evaluate(dataset, &predictor).rmse,
        })
    })?;
    let iterations = learner.t();
    let checkpoint = learner.checkpoint().with_biases(biases.clone());
    let (dictionary, trajectory, codes) = learner.into_parts();
    let codes = codes.expect("code tracking enabled");
    let report = evaluate(dataset, &Predictor::new(&biases, &dictionary, Some(&codes), clip));
    Ok(CompletionOutput {
        dictionary,
        codes,
        biases,
        trajectory,
        report,
        iterations,
        checkpoint,
    })
}
