//! Targeted maximum likelihood estimation with a Super Learner, maximum
//! likelihood path analysis, and a Monte Carlo harness comparing the two.

pub mod data;
pub mod error;
pub mod learners;
pub mod numeric;
pub mod report;
pub mod scale;
pub mod seed;
pub mod sem;
pub mod sim;
pub mod super_learner;
pub mod tmle;

pub use data::{validate_dataset, Dataset};
pub use error::{Error, Result};
pub use report::{Epsilon, TmleReport};
pub use scale::{scale_outcome, unscale_difference, ScaleMap};
pub use seed::{derive_substream, SeedStream};
