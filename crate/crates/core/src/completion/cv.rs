//! Grid search of the code penalty weight on inner train/validation splits.

use serde::{Deserialize, Serialize};

use super::bias::fit_biases;
use super::ingest::RatingsDataset;
use super::model::{complete_with_biases, CompletionConfig};
use crate::error::{ModlError, Result};
use crate::learner::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub grid_size: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub splits: usize,
    /// Fraction of training ratings held out in each inner split.
    pub holdout: f64,
    /// Epochs per inner run; `None` keeps the outer setting.
    pub max_epochs: Option<f64>,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            grid_size: 15,
            lambda_min: 1e-2,
            lambda_max: 10.0,
            splits: 3,
            holdout: 0.33,
            max_epochs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub grid: Vec<f64>,
    /// Mean validation RMSE per grid value.
    pub scores: Vec<f64>,
    pub chosen: f64,
}

/// `size` log-spaced values from `lo` to `hi`, endpoints exact.
pub fn log_grid(lo: f64, hi: f64, size: usize) -> Vec<f64> {
    match size {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let ratio = (hi / lo).ln();
            let mut g: Vec<f64> = (0..size)
                .map(|i| lo * (ratio * i as f64 / (size - 1) as f64).exp())
                .collect();
            g[0] = lo;
            g[size - 1] = hi;
            g
        }
    }
}

const CV_STREAM: u64 = 100;

/// Picks the penalty weight with the lowest mean validation RMSE; ties go
/// to the smaller weight.
pub fn cross_validate_lambda(dataset: &RatingsDataset, config: &CompletionConfig, cv: &CvConfig) -> Result<CvReport> {
    if cv.grid_size == 0 || cv.splits == 0 {
        return Err(ModlError::InvalidConfig("empty cross-validation grid".into()));
    }
    if !(cv.lambda_min > 0.0 && cv.lambda_max >= cv.lambda_min) {
        return Err(ModlError::InvalidConfig(format!(
            "invalid grid bounds [{}, {}]",
            cv.lambda_min, cv.lambda_max
        )));
    }
    let grid = log_grid(cv.lambda_min, cv.lambda_max, cv.grid_size);
    let mut totals = vec![0.0; grid.len()];
    for split in 0..cv.splits {
        let inner = dataset.inner_split(cv.holdout, derive_seed(config.seed, CV_STREAM + split as u64))?;
        let biases = fit_biases(&inner, config.eps_b, config.bias_iters);
        for (idx, &lambda) in grid.iter().enumerate() {
            let mut cfg = config.clone();
            cfg.penalty.lambda = lambda;
            if let Some(e) = cv.max_epochs {
                cfg.max_epochs = e;
            }
            let out = complete_with_biases(&inner, &cfg, biases.clone())?;
            let score = out.report.rmse.ok_or_else(|| {
                ModlError::InsufficientData("inner validation split has no scorable ratings".into())
            })?;
            log::debug!("split {split} lambda {lambda:e}: rmse {score}");
            totals[idx] += score;
        }
    }
    let scores: Vec<f64> = totals.iter().map(|t| t / cv.splits as f64).collect();
    let mut best = 0;
    for i in 1..scores.len() {
        if scores[i] < scores[best] {
            best = i;
        }
    }
    Ok(CvReport {
        chosen: grid[best],
        grid,
        scores,
    })
}
