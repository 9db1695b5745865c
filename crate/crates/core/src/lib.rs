pub mod classifiers;
pub mod cli;
pub mod data;
pub mod error;
pub mod experiments;
pub mod gp;
pub mod kernel;
pub mod linalg;
pub mod metrics;
pub mod model_io;
pub mod optim;
pub mod pipeline;
pub mod simplex;
pub mod sparse;

pub use error::{Error, Result};
