//! Model selection for penalized linear regression by minimizing empirical
//! generalization error, with finite-sample bounds on that error.

pub mod bounds;
pub mod data;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod metrics;
pub mod rng;
pub mod selector;
mod serde_vec;
pub mod sim;

pub use data::{make_folds, split_validation, Dataset, FoldSet, SplitPair};
pub use error::{Error, Result};
