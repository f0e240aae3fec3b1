//! Cascade deep-forest classification.
//!
//! A cascade stacks layers of four probabilistic learners (random forest,
//! extremely randomized trees, Newton-boosted trees and softmax regression).
//! Each layer's out-of-fold class probabilities are appended to the original
//! features to form the next layer's input, and the cascade keeps growing
//! while its out-of-fold accuracy improves.

mod atomic;
pub mod cascade;
pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod learners;
pub mod rng;

pub use atomic::write_atomic;
pub use error::{Error, Result};
