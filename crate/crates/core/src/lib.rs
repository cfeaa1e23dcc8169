//! Pairwise margin regularization and minimal-margin batch selection for
//! small classifiers, with a deterministic trainer and experiment harness.

pub mod data;
pub mod error;
pub mod harness;
pub mod margin;
pub mod model;
pub mod numkernel;
pub mod objective;
pub mod selector;

pub use error::{Error, Result};
