//! Alternated debiasing: global mean plus ridge-shrunk user and item offsets.

use serde::{Deserialize, Serialize};

use super::ingest::RatingsDataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasModel {
    pub mu: f64,
    pub b_user: Vec<f64>,
    pub b_item: Vec<f64>,
    pub eps_b: f64,
    pub iterations: usize,
}

pub const DEFAULT_EPS_B: f64 = 10.0;
pub const DEFAULT_BIAS_ITERS: usize = 10;

impl BiasModel {
    /// `μ + b_user[u] + b_item[i]`
    #[inline]
    pub fn predict(&self, user: usize, item: usize) -> f64 {
        self.mu + self.b_user[user] + self.b_item[item]
    }

    /// All offsets zero.
    pub fn zero(n_users: usize, n_items: usize, mu: f64) -> Self {
        BiasModel {
            mu,
            b_user: vec![0.0; n_users],
            b_item: vec![0.0; n_items],
            eps_b: 0.0,
            iterations: 0,
        }
    }
}

/// Alternates item and user updates for `iters` rounds starting from zero.
pub fn fit_biases(dataset: &RatingsDataset, eps_b: f64, iters: usize) -> BiasModel {
    fit_biases_traced(dataset, eps_b, iters).0
}

/// As [`fit_biases`], also returning the largest bias change of each round.
pub fn fit_biases_traced(dataset: &RatingsDataset, eps_b: f64, iters: usize) -> (BiasModel, Vec<f64>) {
    let mu = dataset.global_mean;
    let mut model = BiasModel::zero(dataset.n, dataset.p, mu);
    model.eps_b = eps_b;
    model.iterations = iters;
    let mut item_sum = vec![0.0; dataset.p];
    let mut item_count = vec![0usize; dataset.p];
    let mut changes = Vec::with_capacity(iters);
    for _ in 0..iters {
        item_sum.iter_mut().for_each(|s| *s = 0.0);
        item_count.iter_mut().for_each(|c| *c = 0);
        for (u, list) in dataset.train.iter().enumerate() {
            for &(i, r) in list {
                item_sum[i] += r - mu - model.b_user[u];
                item_count[i] += 1;
            }
        }
        let mut change = 0.0f64;
        for i in 0..dataset.p {
            let denom = item_count[i] as f64 + eps_b;
            let new = if denom > 0.0 { item_sum[i] / denom } else { 0.0 };
            change = change.max((new - model.b_item[i]).abs());
            model.b_item[i] = new;
        }
        for (u, list) in dataset.train.iter().enumerate() {
            let sum: f64 = list.iter().map(|&(i, r)| r - mu - model.b_item[i]).sum();
            let denom = list.len() as f64 + eps_b;
            let new = if denom > 0.0 { sum / denom } else { 0.0 };
            change = change.max((new - model.b_user[u]).abs());
            model.b_user[u] = new;
        }
        changes.push(change);
    }
    (model, changes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_rating_at_mean_gives_zero_biases() {
        let ds = RatingsDataset::from_lists(vec![vec![(0, 4.0)]], vec![vec![]], 1).unwrap();
        let b = fit_biases(&ds, 10.0, 10);
        assert_eq!(b.mu, 4.0);
        assert_eq!(b.b_user, vec![0.0]);
        assert_eq!(b.b_item, vec![0.0]);
    }

    #[test]
    fn one_round_by_hand() {
        let ds = RatingsDataset::from_lists(vec![vec![(0, 5.0), (1, 3.0)]], vec![vec![]], 2).unwrap();
        let b = fit_biases(&ds, 0.0, 1);
        assert_eq!(b.mu, 4.0);
        assert_eq!(b.b_item, vec![1.0, -1.0]);
        assert_eq!(b.b_user, vec![0.0]);
        assert_eq!(b.predict(0, 0), 5.0);
    }

    #[test]
    fn changes_shrink_over_rounds() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let (n, p) = (40, 25);
        let train: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|_| {
                (0..p)
                    .filter_map(|i| rng.random_bool(0.3).then(|| (i, rng.random_range(1..=5) as f64)))
                    .collect()
            })
            .collect();
        let ds = RatingsDataset::from_lists(train, vec![Vec::new(); n], p).unwrap();
        let (_, changes) = fit_biases_traced(&ds, 10.0, 10);
        assert!(changes.windows(2).all(|w| w[1] <= w[0]), "{changes:?}");
        assert!(changes[9] < changes[0]);
    }
}
