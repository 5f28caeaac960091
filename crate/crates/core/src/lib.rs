pub mod classifier_eval;
pub mod dataset;
pub mod error;
pub mod gan;
pub mod harness;
pub mod numerics;
pub mod rng;
pub mod smote;
pub mod smotified_gan;

pub use error::{Error, Result};
