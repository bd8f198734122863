//! Synthetic datasets with known factors.

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::data::DenseColumns;
use crate::error::{ModlError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseDictParams {
    pub p: usize,
    /// Training columns.
    pub n: usize,
    /// Held-out columns drawn from the same model.
    pub n_test: usize,
    pub k: usize,
    /// Fraction of nonzero rows in each true atom.
    pub atom_density: f64,
    /// Probability that a code coefficient is nonzero.
    pub code_density: f64,
    /// Signal-to-noise power ratio; `None` for noiseless data.
    pub snr: Option<f64>,
    pub seed: u64,
}

impl Default for SparseDictParams {
    fn default() -> Self {
        SparseDictParams {
            p: 400,
            n: 5000,
            n_test: 500,
            k: 10,
            atom_density: 0.1,
            code_density: 0.3,
            snr: Some(10.0),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SparseDictData {
    pub train: DenseColumns,
    pub test: DenseColumns,
    /// `p × k`, unit ℓ2 columns with sparse support.
    pub dictionary: Array2<f64>,
    /// `k × (n + n_test)`; training codes first.
    pub codes: Array2<f64>,
    pub noise_std: f64,
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(ModlError::InvalidConfig(msg()))
    }
}

/// `X = D A + E` with sparse unit-norm atoms and sparse Gaussian codes.
pub fn sparse_dict(params: &SparseDictParams) -> Result<SparseDictData> {
    let SparseDictParams { p, n, n_test, k, .. } = *params;
    check(p > 0 && n > 0 && k > 0, || "p, n and k must be positive".into())?;
    check(params.atom_density > 0.0 && params.atom_density <= 1.0, || {
        format!("atom density must lie in (0, 1], got {}", params.atom_density)
    })?;
    check(params.code_density > 0.0 && params.code_density <= 1.0, || {
        format!("code density must lie in (0, 1], got {}", params.code_density)
    })?;
    if let Some(snr) = params.snr {
        check(snr > 0.0, || format!("snr must be positive, got {snr}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let support = ((params.atom_density * p as f64).round() as usize).clamp(1, p);
    let mut dictionary = Array2::zeros((p, k));
    let mut rows: Vec<usize> = (0..p).collect();
    for j in 0..k {
        rows.shuffle(&mut rng);
        let mut norm = 0.0;
        for &m in &rows[..support] {
            let v: f64 = rng.sample(StandardNormal);
            dictionary[[m, j]] = v;
            norm += v * v;
        }
        let norm = norm.sqrt();
        if norm > 0.0 {
            dictionary.column_mut(j).mapv_inplace(|x| x / norm);
        }
    }
    let total = n + n_test;
    let mut codes = Array2::zeros((k, total));
    for i in 0..total {
        let mut any = false;
        for j in 0..k {
            if rng.random_bool(params.code_density) {
                codes[[j, i]] = rng.sample(StandardNormal);
                any = true;
            }
        }
        if !any {
            let j = rng.random_range(0..k);
            codes[[j, i]] = rng.sample(StandardNormal);
        }
    }
    let mut x = dictionary.dot(&codes);
    let noise_std = match params.snr {
        Some(snr) => {
            let power = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
            (power / snr).sqrt()
        }
        None => 0.0,
    };
    if noise_std > 0.0 {
        let normal = Normal::new(0.0, noise_std).expect("finite std");
        x.mapv_inplace(|v| v + normal.sample(&mut rng));
    }
    let column_major = |from: usize, to: usize| {
        let mut data = Vec::with_capacity(p * (to - from));
        for i in from..to {
            data.extend(x.column(i).iter().copied());
        }
        DenseColumns::new(p, to - from, data)
    };
    Ok(SparseDictData {
        train: column_major(0, n),
        test: column_major(n, total),
        dictionary,
        codes,
        noise_std,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatingsParams {
    pub n_users: usize,
    pub n_items: usize,
    pub rank: usize,
    /// Probability that a rating is observed.
    pub density: f64,
    /// Standard deviation of additive rating noise.
    pub noise: f64,
    pub mu: f64,
    pub bias_std: f64,
    pub seed: u64,
}

impl Default for RatingsParams {
    fn default() -> Self {
        RatingsParams {
            n_users: 2000,
            n_items: 500,
            rank: 5,
            density: 0.1,
            noise: 0.1,
            mu: 3.5,
            bias_std: 0.3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RatingsData {
    /// `(user, item, rating)` in user-major order.
    pub triples: Vec<(usize, usize, f64)>,
    pub user_factors: Array2<f64>,
    pub item_factors: Array2<f64>,
    pub b_user: Vec<f64>,
    pub b_item: Vec<f64>,
    pub mu: f64,
}

/// `r_ui = μ + b_u + b_i + ⟨u, v⟩ + noise` observed independently with
/// probability `density`. Factor entries have variance `rank^{-1/2}`, so the
/// low-rank term has unit variance.
pub fn low_rank_ratings(params: &RatingsParams) -> Result<RatingsData> {
    let RatingsParams {
        n_users,
        n_items,
        rank,
        ..
    } = *params;
    check(n_users > 0 && n_items > 0 && rank > 0, || "sizes and rank must be positive".into())?;
    check(params.density > 0.0 && params.density <= 1.0, || {
        format!("density must lie in (0, 1], got {}", params.density)
    })?;
    check(params.noise >= 0.0 && params.bias_std >= 0.0, || "standard deviations must be nonnegative".into())?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let scale = (rank as f64).powf(-0.25);
    let gauss = |rng: &mut ChaCha8Rng, std: f64| -> f64 { std * rng.sample::<f64, _>(StandardNormal) };
    let user_factors = Array2::from_shape_simple_fn((n_users, rank), || gauss(&mut rng, scale));
    let item_factors = Array2::from_shape_simple_fn((n_items, rank), || gauss(&mut rng, scale));
    let b_user: Vec<f64> = (0..n_users).map(|_| gauss(&mut rng, params.bias_std)).collect();
    let b_item: Vec<f64> = (0..n_items).map(|_| gauss(&mut rng, params.bias_std)).collect();
    let mut triples = Vec::new();
    for u in 0..n_users {
        for i in 0..n_items {
            if rng.random_bool(params.density) {
                let dot: f64 = user_factors.row(u).dot(&item_factors.row(i));
                let r = params.mu + b_user[u] + b_item[i] + dot + gauss(&mut rng, params.noise);
                triples.push((u, i, r));
            }
        }
    }
    Ok(RatingsData {
        triples,
        user_factors,
        item_factors,
        b_user,
        b_item,
        mu: params.mu,
    })
}

fn create(path: &Path) -> Result<BufWriter<std::fs::File>> {
    std::fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| ModlError::io(format!("creating {}", path.display()), e))
}

fn write_err(path: &Path) -> impl Fn(std::io::Error) -> ModlError + '_ {
    move |e| ModlError::io(format!("writing {}", path.display()), e)
}

/// One matrix row per line, comma-separated, shortest round-trip decimals.
pub fn write_matrix_csv(path: &Path, m: ArrayView2<f64>) -> Result<()> {
    let mut w = create(path)?;
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(",")).map_err(write_err(path))?;
    }
    w.flush().map_err(write_err(path))
}

pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let file = std::fs::File::open(path).map_err(|e| ModlError::io(format!("opening {}", path.display()), e))?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| ModlError::io(format!("reading {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| ModlError::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        };
        let before = data.len();
        for field in line.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("invalid number `{}`", field.trim())))?;
            data.push(v);
        }
        let width = data.len() - before;
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => return Err(parse_err(format!("expected {c} fields, found {width}"))),
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| ModlError::EmptyInput(format!("{} has no rows", path.display())))?;
    Array2::from_shape_vec((rows, cols), data).map_err(|e| ModlError::Dimension(e.to_string()))
}

/// Data columns as lines: line `i` holds column `i`.
pub fn write_columns_csv(path: &Path, data: &DenseColumns) -> Result<()> {
    use crate::data::ColumnSource;
    let mut w = create(path)?;
    for c in 0..data.n_cols() {
        let line: Vec<String> = data.column(c).iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(",")).map_err(write_err(path))?;
    }
    w.flush().map_err(write_err(path))
}

pub fn read_columns_csv(path: &Path) -> Result<DenseColumns> {
    let m = read_matrix_csv(path)?;
    let (n, p) = m.dim();
    Ok(DenseColumns::new(p, n, m.iter().copied().collect()))
}

/// `user,item,rating` lines with a header.
pub fn write_ratings_csv(path: &Path, triples: &[(usize, usize, f64)]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "user,item,rating").map_err(write_err(path))?;
    for &(u, i, r) in triples {
        writeln!(w, "{u},{i},{r}").map_err(write_err(path))?;
    }
    w.flush().map_err(write_err(path))
}
