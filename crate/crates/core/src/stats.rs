//! Sufficient statistics of the approximate surrogate.
//!
//! The quadratic part of the surrogate is determined by `C` (k × k, running
//! average of `α αᵀ`) and `B` (p × k, per-row running average of `x[m] αᵀ`).
//! `B` rows are averaged with their own counters `E[m]` so that rows seen
//! rarely under masking are not biased towards zero.

use ndarray::{Array2, ArrayView2, Axis};

use crate::code::{Code, MaskedSample, Penalty};
use crate::error::{ModlError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    pub(crate) c: Array2<f64>,
    pub(crate) b: Array2<f64>,
    pub(crate) counts: Vec<u64>,
    pub(crate) penalty_acc: f64,
    pub(crate) t: u64,
    pub(crate) beta: f64,
}

impl SufficientStats {
    pub fn new(p: usize, k: usize, beta: f64) -> Result<Self> {
        if !(beta > 0.75 && beta <= 1.0) {
            return Err(ModlError::InvalidConfig(format!(
                "weight exponent must lie in (0.75, 1], got {beta}"
            )));
        }
        Ok(SufficientStats {
            c: Array2::zeros((k, k)),
            b: Array2::zeros((p, k)),
            counts: vec![0; p],
            penalty_acc: 0.0,
            t: 0,
            beta,
        })
    }

    pub fn c(&self) -> ArrayView2<'_, f64> {
        self.c.view()
    }

    pub fn b(&self) -> ArrayView2<'_, f64> {
        self.b.view()
    }

    /// Per-row observation counters (the diagonal of Σ Mᵢ).
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn penalty_acc(&self) -> f64 {
        self.penalty_acc
    }

    /// Number of completed iterations.
    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn p(&self) -> usize {
        self.b.nrows()
    }

    pub fn k(&self) -> usize {
        self.c.nrows()
    }

    /// `(1/t)^β` for iteration `t` (1-based).
    pub fn weight_at(&self, t: u64) -> f64 {
        (1.0 / t as f64).powf(self.beta)
    }

    /// `C ← (1 − w) C + w α αᵀ`
    pub fn update_c(&mut self, alpha: &Code, w: f64) {
        let outer = outer_mean(std::slice::from_ref(alpha), self.k());
        self.blend_c(&outer, w);
    }

    /// Blends the averaged outer products of a mini-batch into `C`.
    pub(crate) fn update_c_batch(&mut self, codes: &[Code], w: f64) {
        let outer = outer_mean(codes, self.k());
        self.blend_c(&outer, w);
    }

    fn blend_c(&mut self, outer: &Array2<f64>, w: f64) {
        let k = self.k();
        for i in 0..k {
            for j in i..k {
                let v = (1.0 - w) * self.c[[i, j]] + w * outer[[i, j]];
                self.c[[i, j]] = v;
                self.c[[j, i]] = v;
            }
        }
    }

    /// Per-row update of `B` over the sample's mask, with per-row weights
    /// `(1/E[m])^β`. Rows outside the mask are not touched.
    pub fn update_b(&mut self, sample: &MaskedSample, alpha: &Code) {
        let beta = self.beta;
        for (&m, &x) in sample.rows().iter().zip(sample.values()) {
            self.counts[m] += 1;
            let gamma = if self.counts[m] == 1 {
                1.0
            } else {
                (1.0 / self.counts[m] as f64).powf(beta)
            };
            let mut row = self.b.row_mut(m);
            for (bv, &a) in row.iter_mut().zip(&alpha.alpha) {
                *bv += gamma * (x * a - *bv);
            }
        }
    }

    /// `acc ← (1 − w) acc + w λ (s/p) Ω(α)`
    pub fn update_penalty_acc(&mut self, sample: &MaskedSample, alpha: &Code, penalty: &Penalty, w: f64) {
        let term = penalty.lambda * sample.ratio() * penalty.omega(&alpha.alpha);
        self.penalty_acc = (1.0 - w) * self.penalty_acc + w * term;
    }

    /// Advances the statistics by one (mini-batch) iteration.
    pub fn advance(&mut self, samples: &[MaskedSample], codes: &[Code], penalty: &Penalty) {
        debug_assert_eq!(samples.len(), codes.len());
        if samples.is_empty() {
            return;
        }
        self.t += 1;
        let w = self.weight_at(self.t);
        self.update_c_batch(codes, w);
        let term = samples
            .iter()
            .zip(codes)
            .map(|(s, a)| penalty.lambda * s.ratio() * penalty.omega(&a.alpha))
            .sum::<f64>()
            / samples.len() as f64;
        self.penalty_acc = (1.0 - w) * self.penalty_acc + w * term;
        for (s, a) in samples.iter().zip(codes) {
            self.update_b(s, a);
        }
    }

    /// `½ Tr(Dᵀ D C) − Tr(Dᵀ B) + penalty_acc` for a materialized `p × k`
    /// dictionary. Costs O(p k²).
    pub fn surrogate_value(&self, d: ArrayView2<f64>) -> f64 {
        let dtd = d.t().dot(&d);
        let quad: f64 = (&dtd * &self.c).sum();
        let lin: f64 = (&d * &self.b).sum();
        0.5 * quad - lin + self.penalty_acc
    }

    /// Gradient of the quadratic part, `D C − B`.
    pub fn gradient(&self, d: ArrayView2<f64>) -> Array2<f64> {
        d.dot(&self.c) - &self.b
    }

    /// Number of rows of `B` with a nonzero counter.
    pub fn rows_seen(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    pub(crate) fn from_parts(
        c: Array2<f64>,
        b: Array2<f64>,
        counts: Vec<u64>,
        penalty_acc: f64,
        t: u64,
        beta: f64,
    ) -> Result<Self> {
        let k = c.nrows();
        if c.ncols() != k || b.ncols() != k || b.nrows() != counts.len() {
            return Err(ModlError::Checkpoint("statistics segment shapes disagree".into()));
        }
        Ok(SufficientStats {
            c,
            b,
            counts,
            penalty_acc,
            t,
            beta,
        })
    }
}

fn outer_mean(codes: &[Code], k: usize) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros((k, k));
    for code in codes {
        for i in 0..k {
            let ai = code.alpha[i];
            if ai == 0.0 {
                continue;
            }
            let mut row = out.index_axis_mut(Axis(0), i);
            for (o, &aj) in row.iter_mut().zip(&code.alpha) {
                *o += ai * aj;
            }
        }
    }
    if codes.len() > 1 {
        out /= codes.len() as f64;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn code(v: &[f64]) -> Code {
        Code { alpha: v.to_vec() }
    }

    #[test]
    fn c_first_iteration() {
        let mut s = SufficientStats::new(3, 2, 1.0).unwrap();
        s.update_c(&code(&[1.0, 2.0]), 1.0);
        assert_eq!(s.c, array![[1.0, 2.0], [2.0, 4.0]]);
        s.update_c(&code(&[0.0, 0.0]), 0.5);
        assert_eq!(s.c, array![[0.5, 1.0], [1.0, 2.0]]);
    }

    #[test]
    fn b_first_and_second_observation() {
        let mut s = SufficientStats::new(4, 2, 1.0).unwrap();
        let first = MaskedSample::new(vec![1], vec![3.0], 4).unwrap();
        s.update_b(&first, &code(&[1.0, 0.0]));
        assert_eq!(s.b.row(1).to_vec(), vec![3.0, 0.0]);
        let second = MaskedSample::new(vec![1, 2], vec![1.0, 5.0], 4).unwrap();
        s.update_b(&second, &code(&[0.0, 1.0]));
        assert_eq!(s.b.row(1).to_vec(), vec![1.5, 0.5]);
        assert_eq!(s.b.row(0).to_vec(), vec![0.0, 0.0]);
        assert_eq!(s.b.row(3).to_vec(), vec![0.0, 0.0]);
        assert_eq!(s.counts, vec![0, 2, 1, 0]);
    }

    #[test]
    fn penalty_accumulator_examples() {
        let mut s = SufficientStats::new(2, 2, 1.0).unwrap();
        let half = MaskedSample::new(vec![0], vec![1.0], 2).unwrap();
        s.update_penalty_acc(&half, &code(&[0.0, 0.0]), &Penalty::ridge(1.0), 1.0);
        assert_eq!(s.penalty_acc, 0.0);
        s.update_penalty_acc(&half, &code(&[1.0, 1.0]), &Penalty::ridge(1.0), 1.0);
        assert_eq!(s.penalty_acc, 1.0);

        let mut s = SufficientStats::new(2, 2, 1.0).unwrap();
        let full = MaskedSample::full(vec![1.0, 1.0]).unwrap();
        let codes = [code(&[1.0, -2.0]), code(&[0.5, 0.0]), code(&[3.0, 1.0])];
        let pen = Penalty::lasso(0.7);
        for (t, a) in codes.iter().enumerate() {
            s.update_penalty_acc(&full, a, &pen, 1.0 / (t + 1) as f64);
        }
        let direct = 0.7 / 3.0 * codes.iter().map(|a| pen.omega(&a.alpha)).sum::<f64>();
        assert!((s.penalty_acc - direct).abs() < 1e-12);
    }

    #[test]
    fn full_mask_statistics_match_direct_averages() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (p, k) = (6, 3);
        let mut s = SufficientStats::new(p, k, 1.0).unwrap();
        let mut history = Vec::new();
        for _ in 0..100 {
            let x: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a = code(&(0..k).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>());
            let sample = MaskedSample::full(x.clone()).unwrap();
            s.advance(&[sample], std::slice::from_ref(&a), &Penalty::ridge(0.1));
            history.push((x, a));
            let t = history.len() as f64;
            let mut c = Array2::<f64>::zeros((k, k));
            let mut b = Array2::<f64>::zeros((p, k));
            for (x, a) in &history {
                for i in 0..k {
                    for j in 0..k {
                        c[[i, j]] += a.alpha[i] * a.alpha[j] / t;
                    }
                    for m in 0..p {
                        b[[m, i]] += x[m] * a.alpha[i] / t;
                    }
                }
            }
            assert!((&c - &s.c).iter().all(|v| v.abs() <= 1e-12));
            assert!((&b - &s.b).iter().all(|v| v.abs() <= 1e-12));
        }
        assert!(s.c.iter().zip(s.c.t().iter()).all(|(a, b)| a == b));
        let eig = DMatrix::from_fn(k, k, |i, j| s.c[[i, j]]).symmetric_eigenvalues();
        assert!(eig.iter().all(|&e| e >= -1e-10));
    }

    #[test]
    fn surrogate_examples() {
        let mut s = SufficientStats::new(3, 3, 1.0).unwrap();
        s.penalty_acc = 0.25;
        assert_eq!(s.surrogate_value(Array2::zeros((3, 3)).view()), 0.25);

        let d = array![[1.0, 2.0, 0.0], [0.0, -1.0, 3.0], [0.5, 0.0, 1.0]];
        s.penalty_acc = 0.0;
        s.c = Array2::eye(3);
        s.b = d.clone();
        let fro2: f64 = d.iter().map(|v| v * v).sum();
        assert!((s.surrogate_value(d.view()) + 0.5 * fro2).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (p, k) = (5, 3);
        for _ in 0..5 {
            let mut s = SufficientStats::new(p, k, 0.9).unwrap();
            for _ in 0..4 {
                let x: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
                let a = code(&(0..k).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>());
                s.advance(&[MaskedSample::full(x).unwrap()], &[a], &Penalty::lasso(0.1));
            }
            let d = Array2::from_shape_fn((p, k), |_| rng.random_range(-1.0..1.0));
            let grad = s.gradient(d.view());
            let h = 1e-6;
            for m in 0..p {
                for j in 0..k {
                    let mut plus = d.clone();
                    plus[[m, j]] += h;
                    let mut minus = d.clone();
                    minus[[m, j]] -= h;
                    let fd = (s.surrogate_value(plus.view()) - s.surrogate_value(minus.view())) / (2.0 * h);
                    let rel = (fd - grad[[m, j]]).abs() / grad[[m, j]].abs().max(1e-3);
                    assert!(rel <= 1e-5, "fd {fd} vs {}", grad[[m, j]]);
                }
            }
        }
    }

    #[test]
    fn update_b_leaves_other_rows_untouched() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = SufficientStats::new(50, 4, 0.9).unwrap();
        s.b = Array2::from_shape_fn((50, 4), |_| rng.random_range(-1.0..1.0));
        let before = s.b.clone();
        let rows = vec![2, 7, 30];
        let sample = MaskedSample::new(rows.clone(), vec![1.0, 2.0, 3.0], 50).unwrap();
        s.update_b(&sample, &code(&[1.0, 0.5, 0.0, -1.0]));
        for m in 0..50 {
            if !rows.contains(&m) {
                assert_eq!(s.b.row(m), before.row(m));
                assert_eq!(s.counts[m], 0);
            }
        }
    }

    #[test]
    fn beta_must_be_in_range() {
        assert!(SufficientStats::new(2, 2, 0.75).is_err());
        assert!(SufficientStats::new(2, 2, 1.01).is_err());
        assert!(SufficientStats::new(2, 2, 0.76).is_ok());
    }
}
