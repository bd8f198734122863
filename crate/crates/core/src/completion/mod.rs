//! Explicit-feedback matrix completion.
//!
//! Users are streamed as columns over item rows; each user's mask is the set
//! of items it rated. Ratings are first debiased, the residuals factorized,
//! and a user's missing ratings predicted from the last code computed for
//! it.

mod bias;
mod cv;
mod ingest;
mod model;

pub use bias::{fit_biases, fit_biases_traced, BiasModel, DEFAULT_BIAS_ITERS, DEFAULT_EPS_B};
pub use cv::{cross_validate_lambda, log_grid, CvConfig, CvReport};
pub use ingest::{from_parsed, ingest_ratings, parse_ratings, ParsedRatings, RatingFormat, RatingsDataset, SplitConfig};
pub use model::{
    complete, complete_with_biases, evaluate, residual_columns, rmse, CodeCache, CompletionConfig, CompletionOutput,
    Predictor, RmseReport,
};
