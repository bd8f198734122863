//! Code computation: the reduced penalized regression of one masked column on
//! the matching rows of the dictionary.
//!
//! The objective minimized is
//!
//! ```text
//! ½ ‖M (x − D α)‖₂² + λ (s / p) Ω(α)
//! ```
//!
//! where `s` is the mask size and `p` the ambient row count. Scaling the
//! penalty by `s/p` rather than the quadratic term by `p/s` gives the same
//! minimizer and keeps residuals on the scale of the observed entries.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{ModlError, Result};
use crate::proj::soft_threshold;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PenaltyKind {
    /// Ω(α) = ‖α‖₁
    Lasso,
    /// Ω(α) = ‖α‖₂²
    Ridge,
}

impl std::str::FromStr for PenaltyKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lasso" | "l1" => Ok(PenaltyKind::Lasso),
            "ridge" | "l2" | "squared-l2" => Ok(PenaltyKind::Ridge),
            other => Err(format!("unknown penalty `{other}` (expected lasso or ridge)")),
        }
    }
}

impl std::fmt::Display for PenaltyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PenaltyKind::Lasso => "lasso",
            PenaltyKind::Ridge => "ridge",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Penalty {
    pub kind: PenaltyKind,
    pub lambda: f64,
}

impl Penalty {
    pub fn new(kind: PenaltyKind, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(ModlError::InvalidConfig(format!(
                "penalty weight must be finite and nonnegative, got {lambda}"
            )));
        }
        Ok(Penalty { kind, lambda })
    }

    pub fn lasso(lambda: f64) -> Self {
        Penalty::new(PenaltyKind::Lasso, lambda).expect("invalid lambda")
    }

    pub fn ridge(lambda: f64) -> Self {
        Penalty::new(PenaltyKind::Ridge, lambda).expect("invalid lambda")
    }

    /// Ω(α), without the λ factor.
    pub fn omega(&self, alpha: &[f64]) -> f64 {
        match self.kind {
            PenaltyKind::Lasso => alpha.iter().map(|a| a.abs()).sum(),
            PenaltyKind::Ridge => alpha.iter().map(|a| a * a).sum(),
        }
    }
}

/// One column observed through a mask: sorted row indices and the values
/// found there.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedSample {
    rows: Vec<usize>,
    values: Vec<f64>,
    p: usize,
}

impl MaskedSample {
    pub fn new(rows: Vec<usize>, values: Vec<f64>, p: usize) -> Result<Self> {
        if rows.is_empty() {
            return Err(ModlError::EmptyInput("masked sample has no rows".into()));
        }
        if rows.len() != values.len() {
            return Err(ModlError::Dimension(format!(
                "{} rows but {} values",
                rows.len(),
                values.len()
            )));
        }
        if rows.len() > p || rows[rows.len() - 1] >= p {
            return Err(ModlError::Dimension(format!("row index out of range for p = {p}")));
        }
        if rows.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ModlError::Dimension("mask rows must be strictly increasing".into()));
        }
        Ok(MaskedSample { rows, values, p })
    }

    /// Fully observed column.
    pub fn full(values: Vec<f64>) -> Result<Self> {
        let p = values.len();
        MaskedSample::new((0..p).collect(), values, p)
    }

    pub(crate) fn from_parts_unchecked(rows: Vec<usize>, values: Vec<f64>, p: usize) -> Self {
        debug_assert!(!rows.is_empty() && rows.len() == values.len());
        MaskedSample { rows, values, p }
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Mask size `s`.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `s / p`
    pub fn ratio(&self) -> f64 {
        self.rows.len() as f64 / self.p as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Code {
    pub alpha: Vec<f64>,
}

impl Code {
    pub fn zeros(k: usize) -> Self {
        Code { alpha: vec![0.0; k] }
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }
}

/// Largest acceptable condition estimate for the ridge system.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeSolver {
    /// Coordinate descent stops once the largest coordinate change in a
    /// sweep falls below this.
    pub tol: f64,
    pub max_cycles: usize,
}

impl Default for CodeSolver {
    fn default() -> Self {
        CodeSolver {
            tol: 1e-8,
            max_cycles: 200,
        }
    }
}

/// Result of a solve with the work it took.
#[derive(Debug, Clone)]
pub struct Solved {
    pub code: Code,
    /// Coordinate-descent sweeps (lasso) or 0 (ridge).
    pub cycles: usize,
}

impl CodeSolver {
    /// Solves for the code of `sample` given the dictionary rows selected by
    /// its mask (`view` is `s × k`, row `i` matching `sample.rows()[i]`).
    pub fn solve(&self, sample: &MaskedSample, view: ArrayView2<f64>, penalty: &Penalty) -> Result<Code> {
        self.solve_counted(sample, view, penalty).map(|s| s.code)
    }

    pub fn solve_counted(
        &self,
        sample: &MaskedSample,
        view: ArrayView2<f64>,
        penalty: &Penalty,
    ) -> Result<Solved> {
        if view.nrows() != sample.len() {
            return Err(ModlError::Dimension(format!(
                "dictionary view has {} rows for a mask of size {}",
                view.nrows(),
                sample.len()
            )));
        }
        let x = ArrayView1::from(sample.values());
        let gram = view.t().dot(&view);
        let corr = view.t().dot(&x);
        let weight = penalty.lambda * sample.ratio();
        self.solve_gram(&gram, &corr, penalty.kind, weight)
    }

    /// Solves `min ½ αᵀGα − cᵀα + weight·Ω(α)` given the Gram matrix and
    /// correlations.
    pub fn solve_gram(
        &self,
        gram: &Array2<f64>,
        corr: &Array1<f64>,
        kind: PenaltyKind,
        weight: f64,
    ) -> Result<Solved> {
        match kind {
            PenaltyKind::Lasso => Ok(self.lasso_cd(gram, corr, weight)),
            PenaltyKind::Ridge => ridge_cholesky(gram, corr, weight).map(|code| Solved { code, cycles: 0 }),
        }
    }

    fn lasso_cd(&self, gram: &Array2<f64>, corr: &Array1<f64>, weight: f64) -> Solved {
        let k = corr.len();
        let mut alpha = vec![0.0; k];
        // Gα, maintained incrementally
        let mut g_alpha = vec![0.0; k];
        let mut cycles = 0;
        while cycles < self.max_cycles {
            cycles += 1;
            let mut max_delta = 0.0f64;
            for j in 0..k {
                let gjj = gram[[j, j]];
                let old = alpha[j];
                let new = if gjj > 0.0 {
                    let rho = corr[j] - g_alpha[j] + gjj * old;
                    soft_threshold(rho, weight) / gjj
                } else {
                    0.0
                };
                let delta = new - old;
                if delta != 0.0 {
                    alpha[j] = new;
                    for (l, ga) in g_alpha.iter_mut().enumerate() {
                        *ga += gram[[l, j]] * delta;
                    }
                    max_delta = max_delta.max(delta.abs());
                }
            }
            if max_delta < self.tol {
                break;
            }
        }
        Solved {
            code: Code { alpha },
            cycles,
        }
    }
}

fn ridge_cholesky(gram: &Array2<f64>, corr: &Array1<f64>, weight: f64) -> Result<Code> {
    let k = corr.len();
    let shift = 2.0 * weight;
    let a = DMatrix::from_fn(k, k, |i, j| gram[[i, j]] + if i == j { shift } else { 0.0 });
    let chol = a.cholesky().ok_or(ModlError::IllConditioned {
        condition: f64::INFINITY,
    })?;
    let l = chol.l_dirty();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..k {
        let d = l[(i, i)].abs();
        lo = lo.min(d);
        hi = hi.max(d);
    }
    let condition = if lo > 0.0 { (hi / lo).powi(2) } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(ModlError::IllConditioned { condition });
    }
    let rhs = DVector::from_iterator(k, corr.iter().copied());
    let sol = chol.solve(&rhs);
    Ok(Code {
        alpha: sol.iter().copied().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(rng: &mut ChaCha8Rng, p: usize, k: usize, s: usize) -> (MaskedSample, Array2<f64>, Vec<f64>) {
        let d = Array2::from_shape_fn((p, k), |_| rng.random_range(-1.0..1.0));
        let x: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut rows: Vec<usize> = (0..p).collect();
        use rand::seq::SliceRandom;
        rows.shuffle(rng);
        rows.truncate(s);
        rows.sort_unstable();
        let values = rows.iter().map(|&r| x[r]).collect();
        let view = d.select(ndarray::Axis(0), &rows);
        (MaskedSample::new(rows, values, p).unwrap(), view, x)
    }

    #[test]
    fn ridge_identity_example() {
        let sample = MaskedSample::full(vec![1.0, 0.0]).unwrap();
        let d = array![[1.0, 0.0], [0.0, 1.0]];
        let code = CodeSolver::default().solve(&sample, d.view(), &Penalty::ridge(1.0)).unwrap();
        assert!((code.alpha[0] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(code.alpha[1], 0.0);
    }

    #[test]
    fn lasso_orthonormal_example() {
        let sample = MaskedSample::full(vec![1.0, 0.2]).unwrap();
        let d = array![[1.0, 0.0], [0.0, 1.0]];
        // s = p, so the effective threshold is λ itself
        let code = CodeSolver::default().solve(&sample, d.view(), &Penalty::lasso(0.5)).unwrap();
        assert_eq!(code.alpha, vec![0.5, 0.0]);
    }

    #[test]
    fn lasso_large_lambda_gives_zero() {
        let sample = MaskedSample::new(vec![3], vec![0.7], 10).unwrap();
        let d = array![[0.4, -0.9]];
        let code = CodeSolver::default().solve(&sample, d.view(), &Penalty::lasso(100.0)).unwrap();
        assert_eq!(code.alpha, vec![0.0, 0.0]);
    }

    #[test]
    fn ridge_singular_is_reported() {
        let sample = MaskedSample::new(vec![0], vec![1.0], 4).unwrap();
        // two identical atoms on a single row and no ridge shift
        let d = array![[1.0, 1.0]];
        let err = CodeSolver::default().solve(&sample, d.view(), &Penalty::ridge(0.0)).unwrap_err();
        assert!(matches!(err, ModlError::IllConditioned { .. }));
    }

    #[test]
    fn lasso_subgradient_conditions() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let solver = CodeSolver::default();
        for _ in 0..50 {
            let (sample, view, _) = random_problem(&mut rng, 24, 4, 16);
            let pen = Penalty::lasso(0.3);
            let code = solver.solve(&sample, view.view(), &pen).unwrap();
            let weight = pen.lambda * sample.ratio();
            let a = Array1::from(code.alpha.clone());
            let grad = view.t().dot(&view).dot(&a) - view.t().dot(&Array1::from(sample.values().to_vec()));
            for j in 0..4 {
                if a[j] == 0.0 {
                    assert!(grad[j].abs() <= weight + 1e-7);
                } else {
                    assert!((grad[j] + a[j].signum() * weight).abs() <= 1e-7);
                }
            }
        }
    }

    #[test]
    fn ridge_normal_equation_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (sample, view, _) = random_problem(&mut rng, 30, 5, 12);
        let pen = Penalty::ridge(0.7);
        let code = CodeSolver::default().solve(&sample, view.view(), &pen).unwrap();
        let a = Array1::from(code.alpha);
        let x = Array1::from(sample.values().to_vec());
        let lhs = view.t().dot(&view).dot(&a) + 2.0 * pen.lambda * sample.ratio() * &a;
        let rhs = view.t().dot(&x);
        let res = (&lhs - &rhs).mapv(|v| v * v).sum().sqrt() / rhs.mapv(|v| v * v).sum().sqrt();
        assert!(res <= 1e-10, "relative residual {res}");
    }

    #[test]
    fn unobserved_entries_never_matter() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = 20;
        let d = Array2::from_shape_fn((p, 3), |_| rng.random_range(-1.0..1.0));
        let mut x: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rows = vec![1, 4, 5, 9, 13, 17];
        let view = d.select(ndarray::Axis(0), &rows);
        let solve = |x: &[f64]| {
            let sample = MaskedSample::new(rows.clone(), rows.iter().map(|&r| x[r]).collect(), p).unwrap();
            CodeSolver::default().solve(&sample, view.view(), &Penalty::lasso(0.1)).unwrap()
        };
        let before = solve(&x);
        for (i, v) in x.iter_mut().enumerate() {
            if !rows.contains(&i) {
                *v += 100.0;
            }
        }
        assert_eq!(before, solve(&x));
    }

    #[test]
    fn sample_validation() {
        assert!(MaskedSample::new(vec![], vec![], 3).is_err());
        assert!(MaskedSample::new(vec![1, 1], vec![0.0, 0.0], 3).is_err());
        assert!(MaskedSample::new(vec![0, 3], vec![0.0, 0.0], 3).is_err());
        assert!(MaskedSample::new(vec![0, 2], vec![0.0], 3).is_err());
        assert!(Penalty::new(PenaltyKind::Lasso, -1.0).is_err());
    }

    #[test]
    fn cost_does_not_depend_on_ambient_dimension() {
        use std::time::Instant;
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (s, k) = (100, 8);
        let time_for = |p: usize, rng: &mut ChaCha8Rng| {
            let view = Array2::from_shape_fn((s, k), |_| rng.random_range(-1.0..1.0));
            let rows: Vec<usize> = (0..s).map(|i| i * (p / s)).collect();
            let values = (0..s).map(|_| rng.random_range(-1.0..1.0)).collect();
            let sample = MaskedSample::new(rows, values, p).unwrap();
            let pen = Penalty::ridge(1.0 / sample.ratio());
            let solver = CodeSolver::default();
            let start = Instant::now();
            for _ in 0..2000 {
                std::hint::black_box(solver.solve(&sample, view.view(), &pen).unwrap());
            }
            start.elapsed().as_secs_f64()
        };
        // warm up
        time_for(1_000, &mut rng);
        let small = time_for(1_000, &mut rng);
        let large = time_for(1_000_000, &mut rng);
        let ratio = large / small;
        assert!((0.5..=2.0).contains(&ratio), "timing ratio {ratio}");
    }
}
