//! The streaming loop: draw columns and a mask, compute codes, fold them into
//! the statistics, update the dictionary on the masked rows, and check the
//! surrogate-based stopping rule every `q` iterations.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::code::{Code, CodeSolver, MaskedSample, Penalty};
use crate::completion::CodeCache;
use crate::cputime::process_cpu_seconds;
use crate::data::ColumnSource;
use crate::dict::{Dictionary, ProjectionMode};
use crate::error::{ModlError, Result};
use crate::proj::Norm;
use crate::sampling::{BatchSchedule, Mask, MaskSchedule};
use crate::stats::SufficientStats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    /// Number of atoms.
    pub k: usize,
    pub penalty: Penalty,
    pub norm: Norm,
    pub mode: ProjectionMode,
    /// Reduction factor `r = p / E[s]`.
    pub reduction: usize,
    /// Draw a fresh mask for every column instead of one per mini-batch.
    pub mask_per_column: bool,
    pub batch_size: usize,
    /// Weights are `w_t = (1/t)^β`.
    pub beta: f64,
    #[serde(with = "crate::serde_float")]
    pub epsilon: f64,
    #[serde(with = "crate::serde_float")]
    pub max_epochs: f64,
    /// Iterations between surrogate evaluations; `None` picks a default
    /// from the data size.
    pub eval_interval: Option<usize>,
    pub seed: u64,
    pub solver: CodeSolver,
}

impl LearnerConfig {
    pub fn new(k: usize, penalty: Penalty, norm: Norm) -> Self {
        LearnerConfig {
            k,
            penalty,
            norm,
            mode: ProjectionMode::default_for(norm),
            reduction: 1,
            mask_per_column: false,
            batch_size: 1,
            beta: 0.9,
            epsilon: 1e-4,
            max_epochs: 1.0,
            eval_interval: None,
            seed: 0,
            solver: CodeSolver::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModlError::InvalidConfig(m));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.reduction == 0 {
            return bad("reduction factor must be at least 1".into());
        }
        if !(self.beta > 0.75 && self.beta <= 1.0) {
            return bad(format!("beta must lie in (0.75, 1], got {}", self.beta));
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.max_epochs >= 0.0) {
            return bad(format!("max_epochs must be nonnegative, got {}", self.max_epochs));
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if self.eval_interval == Some(0) {
            return bad("evaluation interval must be at least 1".into());
        }
        Ok(())
    }

    /// `q = 100 · max(1, n / (η · 1000))` unless set explicitly.
    pub fn eval_interval_for(&self, n: usize) -> usize {
        self.eval_interval
            .unwrap_or_else(|| 100 * (n / (self.batch_size * 1000)).max(1))
    }
}

/// Independent streams derived from the run seed.
pub(crate) fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const MASK_STREAM: u64 = 1;
const BATCH_STREAM: u64 = 2;
const INIT_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub t: u64,
    pub epochs: f64,
    pub cpu_time_s: f64,
    pub surrogate: f64,
    pub test_objective: Option<f64>,
    pub rmse: Option<f64>,
    pub l1_l2_ratio: f64,
}

/// Extra metrics computed at trajectory points.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Metrics {
    pub test_objective: Option<f64>,
    pub rmse: Option<f64>,
}

/// Picks `k` distinct data columns (nonzero ones first), sorted by index,
/// each projected onto the unit ball.
pub fn init_dictionary<S: ColumnSource + ?Sized>(config: &LearnerConfig, source: &S) -> Result<Dictionary> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    let n = source.n_cols();
    if n < config.k {
        return Err(ModlError::InsufficientData(format!(
            "{} columns available for {} atoms",
            n, config.k
        )));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(config.seed, INIT_STREAM));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut chosen: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&c| source.observed(c) > 0)
        .take(config.k)
        .collect();
    if chosen.len() < config.k {
        let extra: Vec<usize> = order
            .iter()
            .copied()
            .filter(|c| !chosen.contains(c))
            .take(config.k - chosen.len())
            .collect();
        chosen.extend(extra);
    }
    chosen.sort_unstable();
    let p = source.n_rows();
    let mut atoms = Array2::zeros((p, config.k));
    for (j, &c) in chosen.iter().enumerate() {
        let col = source.dense_column(c);
        atoms.column_mut(j).iter_mut().zip(&col).for_each(|(a, v)| *a = *v);
    }
    Ok(Dictionary::from_atoms(atoms, config.norm, config.mode))
}

/// What one iteration did.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub columns: Vec<usize>,
    /// Columns whose masked sample was empty.
    pub skipped: usize,
    pub rows_updated: usize,
    pub ops: u64,
}

pub struct Learner<'a, S: ColumnSource + ?Sized> {
    pub(crate) config: LearnerConfig,
    pub(crate) source: &'a S,
    pub(crate) dict: Dictionary,
    pub(crate) stats: SufficientStats,
    pub(crate) masks: MaskSchedule,
    pub(crate) batches: BatchSchedule,
    pub(crate) columns_seen: u64,
    /// Surrogate at the previous evaluation point (0 before the first).
    pub(crate) h_prev: f64,
    pub(crate) cpu_s: f64,
    pub(crate) ops: u64,
    pub(crate) skipped_samples: u64,
    pub(crate) code_cache: Option<CodeCache>,
    pub(crate) trajectory: Vec<TrajectoryRecord>,
    pub(crate) converged: bool,
}

impl<'a, S: ColumnSource + ?Sized> Learner<'a, S> {
    pub fn new(config: LearnerConfig, source: &'a S) -> Result<Self> {
        config.validate()?;
        let dict = init_dictionary(&config, source)?;
        Learner::with_dictionary(config, source, dict)
    }

    /// Starts from a given initial dictionary.
    pub fn with_dictionary(config: LearnerConfig, source: &'a S, dict: Dictionary) -> Result<Self> {
        config.validate()?;
        let (p, n) = (source.n_rows(), source.n_cols());
        if dict.p() != p || dict.k() != config.k {
            return Err(ModlError::Dimension(format!(
                "initial dictionary is {}×{}, expected {}×{}",
                dict.p(),
                dict.k(),
                p,
                config.k
            )));
        }
        let masks = MaskSchedule::new(p, config.reduction, derive_seed(config.seed, MASK_STREAM))?;
        let batches = BatchSchedule::new(n, config.batch_size, derive_seed(config.seed, BATCH_STREAM))?;
        let stats = SufficientStats::new(p, config.k, config.beta)?;
        Ok(Learner {
            config,
            source,
            dict,
            stats,
            masks,
            batches,
            columns_seen: 0,
            h_prev: 0.0,
            cpu_s: 0.0,
            ops: 0,
            skipped_samples: 0,
            code_cache: None,
            trajectory: Vec::new(),
            converged: false,
        })
    }

    /// Keeps the last code computed for every column.
    pub fn track_codes(mut self) -> Self {
        if self.code_cache.is_none() {
            self.code_cache = Some(CodeCache::new(self.source.n_cols(), self.config.k));
        }
        self
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dict
    }

    pub fn stats(&self) -> &SufficientStats {
        &self.stats
    }

    pub fn code_cache(&self) -> Option<&CodeCache> {
        self.code_cache.as_ref()
    }

    pub fn trajectory(&self) -> &[TrajectoryRecord] {
        &self.trajectory
    }

    pub fn into_parts(self) -> (Dictionary, Vec<TrajectoryRecord>, Option<CodeCache>) {
        (self.dict, self.trajectory, self.code_cache)
    }

    /// Iterations performed.
    pub fn t(&self) -> u64 {
        self.stats.t()
    }

    pub fn epochs_seen(&self) -> f64 {
        self.columns_seen as f64 / self.source.n_cols() as f64
    }

    pub fn columns_seen(&self) -> u64 {
        self.columns_seen
    }

    /// Cumulative arithmetic-operation count.
    pub fn ops(&self) -> u64 {
        self.ops
    }

    pub fn cpu_seconds(&self) -> f64 {
        self.cpu_s
    }

    pub fn skipped_samples(&self) -> u64 {
        self.skipped_samples
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn eval_interval(&self) -> usize {
        self.config.eval_interval_for(self.source.n_cols())
    }

    /// Runs one iteration. Iterations whose samples all come out empty do
    /// not advance `t`.
    pub fn step(&mut self) -> Result<StepReport> {
        let start = process_cpu_seconds();
        let report = self.step_inner();
        self.cpu_s += process_cpu_seconds() - start;
        report
    }

    fn step_inner(&mut self) -> Result<StepReport> {
        let columns = self
            .batches
            .next_batch()
            .expect("unbounded batch schedule always yields");
        let k = self.config.k as u64;
        let shared = if self.config.mask_per_column {
            None
        } else {
            Some(self.masks.next_mask())
        };
        let mut samples: Vec<MaskedSample> = Vec::with_capacity(columns.len());
        let mut sampled_cols = Vec::with_capacity(columns.len());
        let mut skipped = 0;
        for &col in &columns {
            let drawn;
            let mask = match &shared {
                Some(m) => m,
                None => {
                    drawn = self.masks.next_mask();
                    &drawn
                }
            };
            match self.source.sample(col, mask) {
                Some(s) => {
                    samples.push(s);
                    sampled_cols.push(col);
                }
                None => skipped += 1,
            }
        }
        self.skipped_samples += skipped as u64;
        self.columns_seen += columns.len() as u64;

        let mut ops = 0u64;
        let mut codes: Vec<Code> = Vec::with_capacity(samples.len());
        for sample in &samples {
            let s = sample.len() as u64;
            let view = self.dict.masked_rows(sample.rows());
            let solved = self.config.solver.solve_counted(sample, view.view(), &self.config.penalty)?;
            ops += s * k + 2 * s * k * k + 2 * s * k;
            ops += match self.config.penalty.kind {
                crate::code::PenaltyKind::Lasso => solved.cycles as u64 * k * (2 * k + 6),
                crate::code::PenaltyKind::Ridge => k * k * k / 3 + 3 * k * k,
            };
            codes.push(solved.code);
        }
        if samples.is_empty() {
            return Ok(StepReport {
                columns,
                skipped,
                rows_updated: 0,
                ops,
            });
        }

        self.stats.advance(&samples, &codes, &self.config.penalty);
        let sampled: u64 = samples.iter().map(|s| s.len() as u64).sum();
        ops += (samples.len() as u64 + 3) * k * k + sampled * (3 * k + 2) + samples.len() as u64 * k;

        let rows = union_rows(&samples);
        let dict_ops_before = self.dict.diagnostics.ops;
        self.dict.update(&self.stats, &rows)?;
        ops += self.dict.diagnostics.ops - dict_ops_before;

        if let Some(cache) = self.code_cache.as_mut() {
            let t = self.stats.t();
            for (col, code) in sampled_cols.iter().zip(&codes) {
                cache.store(*col, code, t);
            }
        }
        self.ops += ops;
        Ok(StepReport {
            columns,
            skipped,
            rows_updated: rows.len(),
            ops,
        })
    }

    /// Current surrogate value `h_t(D_t)`.
    pub fn surrogate(&self) -> f64 {
        self.stats.surrogate_value(self.dict.to_matrix().view())
    }

    /// Evaluates the surrogate, appends a trajectory record and applies the
    /// stopping rule. Returns `true` when the rule fires.
    pub fn evaluate(&mut self, metrics: Metrics) -> bool {
        let d = self.dict.to_matrix();
        let h = self.stats.surrogate_value(d.view());
        self.trajectory.push(TrajectoryRecord {
            t: self.stats.t(),
            epochs: self.epochs_seen(),
            cpu_time_s: self.cpu_s,
            surrogate: h,
            test_objective: metrics.test_objective,
            rmse: metrics.rmse,
            l1_l2_ratio: sparsity_ratio(d.view()),
        });
        let change = relative_change(self.h_prev, h);
        self.h_prev = h;
        // masks need one full permutation cycle before the rule may fire
        let fires = self.stats.t() >= self.config.reduction as u64 && change < self.config.epsilon;
        if fires {
            self.converged = true;
        }
        fires
    }

    /// Runs until the stopping rule fires or `max_epochs` is reached,
    /// evaluating every `q` iterations. `metrics` is called at each
    /// evaluation point, outside the CPU-time accounting.
    pub fn run<F>(&mut self, mut metrics: F) -> Result<()>
    where
        F: FnMut(&Learner<'a, S>) -> Result<Metrics>,
    {
        let q = self.eval_interval() as u64;
        let budget = (self.config.max_epochs * self.source.n_cols() as f64).ceil() as u64;
        let mut last_eval = self.trajectory.last().map(|r| r.t);
        let mut steps_since_eval = 0u64;
        while !self.converged && self.columns_seen < budget {
            let before = self.stats.t();
            self.step()?;
            if self.stats.t() == before {
                continue;
            }
            steps_since_eval += 1;
            if self.stats.t().is_multiple_of(q) {
                let m = metrics(self)?;
                last_eval = Some(self.stats.t());
                steps_since_eval = 0;
                if self.evaluate(m) {
                    break;
                }
            }
        }
        if steps_since_eval > 0 && last_eval != Some(self.stats.t()) {
            let m = metrics(self)?;
            self.evaluate(m);
        }
        Ok(())
    }
}

/// `|h_prev / h − 1|`, or `|h_prev − h| / max(|h|, 1e-12)` when `h ≤ 0`.
pub fn relative_change(h_prev: f64, h: f64) -> f64 {
    if h > 0.0 {
        (h_prev / h - 1.0).abs()
    } else {
        (h_prev - h).abs() / h.abs().max(1e-12)
    }
}

/// Sorted union of the samples' rows.
fn union_rows(samples: &[MaskedSample]) -> Vec<usize> {
    if samples.len() == 1 {
        return samples[0].rows().to_vec();
    }
    let mut rows: Vec<usize> = samples.iter().flat_map(|s| s.rows().iter().copied()).collect();
    rows.sort_unstable();
    rows.dedup();
    rows
}

/// Output of [`fit`].
#[derive(Debug, Clone)]
pub struct FitOutput {
    pub dictionary: Dictionary,
    pub trajectory: Vec<TrajectoryRecord>,
    pub iterations: u64,
    pub converged: bool,
}

/// Runs the learner from its default initialization.
pub fn fit<S: ColumnSource + ?Sized>(config: &LearnerConfig, source: &S) -> Result<FitOutput> {
    let mut learner = Learner::new(config.clone(), source)?;
    learner.run(|_| Ok(Metrics::default()))?;
    let iterations = learner.t();
    let converged = learner.converged();
    let (dictionary, trajectory, _) = learner.into_parts();
    Ok(FitOutput {
        dictionary,
        trajectory,
        iterations,
        converged,
    })
}

/// Mean over test columns of `min_α ½‖x − Dα‖² + λ Ω(α)`, each column taken
/// with all its observed entries.
pub fn test_objective<S: ColumnSource + ?Sized>(
    dict: &Dictionary,
    test: &S,
    penalty: &Penalty,
    solver: &CodeSolver,
) -> Result<f64> {
    let n = test.n_cols();
    if n == 0 {
        return Err(ModlError::EmptyInput("no test columns".into()));
    }
    let full = dict.to_matrix();
    let mut total = 0.0;
    for col in 0..n {
        let Some(sample) = test.sample(col, &Mask::Full) else {
            continue;
        };
        total += column_loss(full.view(), &sample, penalty, solver)?;
    }
    Ok(total / n as f64)
}

/// `½‖M(x − Dα)‖² + λ (s/p) Ω(α)` at the optimal code.
pub fn column_loss(
    full: ArrayView2<f64>,
    sample: &MaskedSample,
    penalty: &Penalty,
    solver: &CodeSolver,
) -> Result<f64> {
    let view = full.select(ndarray::Axis(0), sample.rows());
    let code = solver.solve(sample, view.view(), penalty)?;
    let fit = view.dot(&ndarray::ArrayView1::from(&code.alpha));
    let resid: f64 = sample
        .values()
        .iter()
        .zip(fit.iter())
        .map(|(x, f)| (x - f) * (x - f))
        .sum();
    Ok(0.5 * resid + penalty.lambda * sample.ratio() * penalty.omega(&code.alpha))
}

/// Mean of `‖d_j‖₁ / ‖d_j‖₂` over nonzero atoms; 0 when all atoms vanish.
pub fn sparsity_ratio(d: ArrayView2<f64>) -> f64 {
    let mut sum = 0.0;
    let mut count = 0;
    for col in d.columns() {
        let l2 = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        if l2 > 0.0 {
            sum += col.iter().map(|x| x.abs()).sum::<f64>() / l2;
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DenseColumns;
    use ndarray::array;

    fn identity_source(p: usize) -> DenseColumns {
        let cols: Vec<Vec<f64>> = (0..p)
            .map(|j| (0..p).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        DenseColumns::from_columns(&cols)
    }

    #[test]
    fn init_from_identity_gives_identity() {
        let src = identity_source(5);
        let cfg = LearnerConfig::new(5, Penalty::lasso(0.1), Norm::L2);
        let d = init_dictionary(&cfg, &src).unwrap();
        assert_eq!(d.to_matrix(), Array2::<f64>::eye(5));
        let again = init_dictionary(&cfg, &src).unwrap();
        assert_eq!(d, again);
    }

    #[test]
    fn init_projects_and_checks_size() {
        let src = DenseColumns::from_columns(&[vec![3.0, 4.0], vec![1.0, 1.0], vec![0.1, 0.0]]);
        for norm in [Norm::L1, Norm::L2] {
            let cfg = LearnerConfig::new(3, Penalty::lasso(0.1), norm);
            let d = init_dictionary(&cfg, &src).unwrap();
            for j in 0..3 {
                assert!(norm.eval(&d.materialize_column(j)) <= 1.0 + 1e-12);
            }
        }
        let cfg = LearnerConfig::new(4, Penalty::lasso(0.1), Norm::L2);
        assert!(matches!(init_dictionary(&cfg, &src), Err(ModlError::InsufficientData(_))));
    }

    #[test]
    fn zero_epochs_returns_initial_dictionary() {
        let src = identity_source(4);
        let mut cfg = LearnerConfig::new(2, Penalty::lasso(0.1), Norm::L2);
        cfg.max_epochs = 0.0;
        let d0 = init_dictionary(&cfg, &src).unwrap();
        let out = fit(&cfg, &src).unwrap();
        assert_eq!(out.dictionary, d0);
        assert_eq!(out.iterations, 0);
        assert!(out.trajectory.is_empty());
    }

    #[test]
    fn infinite_tolerance_stops_at_first_check() {
        let src = identity_source(6);
        let mut cfg = LearnerConfig::new(2, Penalty::ridge(0.1), Norm::L2);
        cfg.epsilon = f64::INFINITY;
        cfg.eval_interval = Some(3);
        cfg.max_epochs = 10.0;
        let out = fit(&cfg, &src).unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations, 3);
        assert_eq!(out.trajectory.len(), 1);
    }

    #[test]
    fn relative_change_handles_nonpositive_values() {
        assert_eq!(relative_change(2.0, 1.0), 1.0);
        assert_eq!(relative_change(-1.0, -2.0), 0.5);
        assert!(relative_change(1.0, 0.0) > 1e11);
    }

    #[test]
    fn sparsity_ratio_examples() {
        assert_eq!(sparsity_ratio(array![[1.0, 0.0], [0.0, -1.0]].view()), 1.0);
        let c = Array2::from_elem((9, 1), 0.2);
        assert!((sparsity_ratio(c.view()) - 3.0).abs() < 1e-12);
        let mixed = array![[3.0, 0.0, 0.0], [4.0, 0.0, 1.0]];
        assert!((sparsity_ratio(mixed.view()) - (7.0 / 5.0 + 1.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn test_objective_examples() {
        // x is an atom and λ = 0: zero loss
        let x = vec![0.6, 0.8, 0.0];
        let d = Dictionary::from_atoms(array![[0.6, 0.0], [0.8, 0.0], [0.0, 1.0]], Norm::L2, ProjectionMode::ExactLazy);
        let test = DenseColumns::from_columns(std::slice::from_ref(&x));
        let v = test_objective(&d, &test, &Penalty::lasso(0.0), &CodeSolver::default()).unwrap();
        assert!(v.abs() < 1e-14);
        // zero dictionary: α = 0, loss ½‖x‖²
        let zero = Dictionary::from_atoms(Array2::zeros((3, 2)), Norm::L2, ProjectionMode::ExactLazy);
        let v = test_objective(&zero, &test, &Penalty::lasso(10.0), &CodeSolver::default()).unwrap();
        assert!((v - 0.5).abs() < 1e-14);
    }

    #[test]
    fn trajectory_is_reproducible() {
        let cols: Vec<Vec<f64>> = (0..30)
            .map(|j| (0..8).map(|i| ((i * 7 + j * 3) % 5) as f64 - 2.0).collect())
            .collect();
        let src = DenseColumns::from_columns(&cols);
        let mut cfg = LearnerConfig::new(3, Penalty::lasso(0.05), Norm::L2);
        cfg.reduction = 2;
        cfg.batch_size = 4;
        cfg.eval_interval = Some(5);
        cfg.max_epochs = 3.0;
        cfg.epsilon = 1e-12;
        let a = fit(&cfg, &src).unwrap();
        let b = fit(&cfg, &src).unwrap();
        assert_eq!(a.dictionary, b.dictionary);
        let strip = |t: &[TrajectoryRecord]| {
            t.iter()
                .map(|r| (r.t, r.surrogate.to_bits(), r.l1_l2_ratio.to_bits()))
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&a.trajectory), strip(&b.trajectory));
        assert!(a.trajectory.windows(2).all(|w| w[0].t < w[1].t && w[0].cpu_time_s <= w[1].cpu_time_s));
    }
}
