//! Config resolution: file, then `MODL_SEED`, then `--set` overrides.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::Result;
use modl_core::bench::FlatConfig;
use modl_core::LearnerConfig;

pub const SEED_VAR: &str = "MODL_SEED";

/// A problem with the invocation itself rather than with data or numerics.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Non-finite values in an otherwise successful run.
#[derive(Debug)]
pub struct NumericError(pub String);

impl fmt::Display for NumericError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn load(config: Option<&Path>, overrides: &[String]) -> Result<FlatConfig> {
    let mut cfg = match config {
        Some(path) => FlatConfig::load(path)?,
        None => FlatConfig::new(),
    };
    if let Ok(seed) = std::env::var(SEED_VAR) {
        let parsed: u64 = seed
            .trim()
            .parse()
            .map_err(|_| usage(format!("{SEED_VAR}={seed} is not an unsigned integer")))?;
        eprintln!("{SEED_VAR}={parsed} overrides seed");
        cfg.set("seed", parsed);
    }
    for o in overrides {
        cfg.apply_override(o)?;
    }
    Ok(cfg)
}

pub fn path(cfg: &FlatConfig, key: &str) -> Result<PathBuf> {
    Ok(PathBuf::from(cfg.require::<String>(key)?))
}

/// Resolved learner keys in the form [`FlatConfig::learner_config`] reads.
pub fn learner_entries(lc: &LearnerConfig) -> Vec<(&'static str, String)> {
    let mut out = vec![
        ("k", lc.k.to_string()),
        ("penalty", lc.penalty.kind.to_string()),
        ("lambda", lc.penalty.lambda.to_string()),
        ("norm", lc.norm.to_string()),
        ("mode", lc.mode.to_string()),
        ("reduction", lc.reduction.to_string()),
        ("mask_per_column", lc.mask_per_column.to_string()),
        ("batch_size", lc.batch_size.to_string()),
        ("beta", lc.beta.to_string()),
        ("epsilon", lc.epsilon.to_string()),
        ("max_epochs", lc.max_epochs.to_string()),
        ("seed", lc.seed.to_string()),
        ("solver_tol", lc.solver.tol.to_string()),
        ("solver_max_cycles", lc.solver.max_cycles.to_string()),
    ];
    if let Some(q) = lc.eval_interval {
        out.push(("eval_interval", q.to_string()));
    }
    out
}

pub fn set_all(cfg: &mut FlatConfig, entries: &[(&str, String)]) {
    for (k, v) in entries {
        cfg.set(k, v);
    }
}

/// Creates `out/run_id`, refusing to reuse an existing one unless
/// `overwrite` is set, in which case it is emptied first.
pub fn prepare_run_dir(out: &Path, run_id: &str, overwrite: bool) -> Result<PathBuf> {
    if run_id.is_empty() || run_id.contains(['/', '\\']) || run_id == "." || run_id == ".." {
        return Err(usage(format!("invalid run id `{run_id}`")));
    }
    let dir = out.join(run_id);
    if dir.exists() {
        if !overwrite {
            return Err(usage(format!(
                "{} already exists; pass --overwrite to replace it",
                dir.display()
            )));
        }
        std::fs::remove_dir_all(&dir)?;
    }
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Comma-separated list of values.
pub fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    let values: Vec<T> = text
        .split(',')
        .map(|v| v.trim())
        .filter(|v| !v.is_empty())
        .map(|v| v.parse().map_err(|_| usage(format!("invalid {what} `{v}`"))))
        .collect::<Result<_>>()?;
    if values.is_empty() {
        return Err(usage(format!("empty {what} list")));
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use modl_core::{Norm, Penalty};

    #[test]
    fn learner_entries_round_trip() {
        let mut lc = LearnerConfig::new(7, Penalty::ridge(0.125), Norm::L1);
        lc.reduction = 4;
        lc.eval_interval = Some(33);
        lc.beta = 0.85;
        let mut cfg = FlatConfig::new();
        set_all(&mut cfg, &learner_entries(&lc));
        assert_eq!(cfg.learner_config().unwrap(), lc);
        cfg.reject_unused().unwrap();
    }

    #[test]
    fn lists() {
        assert_eq!(parse_list::<usize>("1, 4,8", "r").unwrap(), vec![1, 4, 8]);
        assert!(parse_list::<usize>("1,x", "r").is_err());
        assert!(parse_list::<f64>(",", "beta").is_err());
    }

    #[test]
    fn run_dir_refuses_reuse() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = prepare_run_dir(tmp.path(), "a", false).unwrap();
        std::fs::write(dir.join("f"), "x").unwrap();
        let err = prepare_run_dir(tmp.path(), "a", false).unwrap_err();
        assert!(err.downcast_ref::<UsageError>().is_some());
        let dir = prepare_run_dir(tmp.path(), "a", true).unwrap();
        assert!(!dir.join("f").exists());
        assert!(prepare_run_dir(tmp.path(), "../b", false).is_err());
    }
}
