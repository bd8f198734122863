//! Masked online dictionary learning.
//!
//! Factorizes a `p × n` matrix `X ≈ D A` by streaming its columns. Each
//! iteration observes a column through a random row mask, solves a reduced
//! penalized regression for the code, folds the result into running
//! statistics, and updates only the masked rows of the dictionary. Work per
//! iteration scales with the mask size rather than with `p`.
//!
//! ```
//! use modl_core::{fit, DenseColumns, LearnerConfig, Norm, Penalty};
//!
//! let cols: Vec<Vec<f64>> = (0..50)
//!     .map(|j| (0..12).map(|i| ((i + j) % 4) as f64).collect())
//!     .collect();
//! let data = DenseColumns::from_columns(&cols);
//! let mut config = LearnerConfig::new(3, Penalty::lasso(0.1), Norm::L2);
//! config.reduction = 3;
//! config.max_epochs = 2.0;
//! let out = fit(&config, &data).unwrap();
//! assert_eq!(out.dictionary.k(), 3);
//! ```

pub mod bench;
pub mod code;
pub mod completion;
pub mod cputime;
pub mod data;
pub mod dict;
pub mod error;
pub mod learner;
#[cfg(feature = "oracles")]
pub mod oracle;
pub mod proj;
pub mod sampling;
pub mod stats;

mod serde_float;

pub use code::{Code, CodeSolver, MaskedSample, Penalty, PenaltyKind};
pub use data::{ColumnSource, DenseColumns, SparseColumns};
pub use dict::{DictDiagnostics, Dictionary, ProjectionMode};
pub use error::{ErrorKind, ModlError, Result};
pub use learner::{
    fit, init_dictionary, sparsity_ratio, test_objective, FitOutput, Learner, LearnerConfig, Metrics,
    TrajectoryRecord,
};
pub use proj::Norm;
pub use sampling::{BatchSchedule, Mask, MaskSchedule};
pub use stats::SufficientStats;
