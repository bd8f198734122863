//! Flat `key = value` run configuration with command-line overrides.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::str::FromStr;

use crate::code::{CodeSolver, Penalty, PenaltyKind};
use crate::dict::ProjectionMode;
use crate::error::{ModlError, Result};
use crate::learner::LearnerConfig;
use crate::proj::Norm;

/// Ordered key/value pairs. Lines are `key = value`; `#` starts a comment.
#[derive(Debug, Clone, Default)]
pub struct FlatConfig {
    values: BTreeMap<String, String>,
    read: RefCell<BTreeSet<String>>,
}

impl PartialEq for FlatConfig {
    fn eq(&self, other: &Self) -> bool {
        self.values == other.values
    }
}

impl FlatConfig {
    pub fn new() -> Self {
        FlatConfig::default()
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = FlatConfig::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ModlError::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                message: format!("expected `key = value`, found `{line}`"),
            })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(ModlError::Parse {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    message: "empty key".into(),
                });
            }
            cfg.values.insert(k.to_string(), v.trim().to_string());
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ModlError::io(format!("reading {}", path.display()), e))?;
        FlatConfig::parse(&text, path)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.values.insert(key.to_string(), value.to_string());
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| ModlError::InvalidConfig(format!("override `{assignment}` is not key=value")))?;
        self.set(k.trim(), v.trim());
        Ok(())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.read.borrow_mut().insert(key.to_string());
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| ModlError::InvalidConfig(format!("{key} = {v}: {e}"))),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?
            .ok_or_else(|| ModlError::InvalidConfig(format!("missing required key `{key}`")))
    }

    /// Keys never read, in order.
    pub fn unused_keys(&self) -> Vec<String> {
        let read = self.read.borrow();
        self.values.keys().filter(|k| !read.contains(*k)).cloned().collect()
    }

    /// Fails on keys that no getter asked for.
    pub fn reject_unused(&self) -> Result<()> {
        let unused = self.unused_keys();
        if unused.is_empty() {
            Ok(())
        } else {
            Err(ModlError::InvalidConfig(format!("unknown keys: {}", unused.join(", "))))
        }
    }

    /// Sorted `key = value` lines.
    pub fn render(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Learner settings. `k`, `penalty`, `lambda` and `norm` are required;
    /// the rest default as in [`LearnerConfig::new`].
    pub fn learner_config(&self) -> Result<LearnerConfig> {
        let kind: PenaltyKind = self.get_or("penalty", PenaltyKind::Lasso)?;
        let lambda: f64 = self.require("lambda")?;
        let norm: Norm = self.get_or("norm", Norm::L2)?;
        let mut cfg = LearnerConfig::new(self.require("k")?, Penalty::new(kind, lambda)?, norm);
        cfg.mode = self.get_or::<ProjectionMode>("mode", cfg.mode)?;
        cfg.reduction = self.get_or("reduction", cfg.reduction)?;
        cfg.mask_per_column = self.get_or("mask_per_column", cfg.mask_per_column)?;
        cfg.batch_size = self.get_or("batch_size", cfg.batch_size)?;
        cfg.beta = self.get_or("beta", cfg.beta)?;
        cfg.epsilon = self.get_or("epsilon", cfg.epsilon)?;
        cfg.max_epochs = self.get_or("max_epochs", cfg.max_epochs)?;
        cfg.eval_interval = self.get("eval_interval")?;
        cfg.seed = self.get_or("seed", cfg.seed)?;
        let default = CodeSolver::default();
        cfg.solver = CodeSolver {
            tol: self.get_or("solver_tol", default.tol)?,
            max_cycles: self.get_or("solver_max_cycles", default.max_cycles)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_override_render() {
        let text = "# run\nk = 10\nlambda=0.1 # weight\n\nnorm = l1\n";
        let mut cfg = FlatConfig::parse(text, Path::new("x.cfg")).unwrap();
        cfg.apply_override("k=12").unwrap();
        assert_eq!(cfg.render(), "k = 12\nlambda = 0.1\nnorm = l1\n");
        let lc = cfg.learner_config().unwrap();
        assert_eq!(lc.k, 12);
        assert_eq!(lc.norm, Norm::L1);
        assert_eq!(lc.mode, ProjectionMode::Approximate);
        let again = FlatConfig::parse(&cfg.render(), Path::new("y")).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn errors_are_reported() {
        match FlatConfig::parse("k = 1\noops\n", Path::new("c")).unwrap_err() {
            ModlError::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("{e}"),
        }
        let cfg = FlatConfig::parse("k = x\nlambda = 1\n", Path::new("c")).unwrap();
        assert!(matches!(cfg.learner_config(), Err(ModlError::InvalidConfig(_))));
        let cfg = FlatConfig::parse("k = 2\nlambda = 1\nbeta = 0.5\n", Path::new("c")).unwrap();
        assert!(matches!(cfg.learner_config(), Err(ModlError::InvalidConfig(_))));
        let cfg = FlatConfig::parse("k = 2\nlambda = 1\ntypo = 3\n", Path::new("c")).unwrap();
        cfg.learner_config().unwrap();
        assert_eq!(cfg.unused_keys(), vec!["typo".to_string()]);
        assert!(cfg.reject_unused().is_err());
    }
}
