//! Open-set self-learning: a closed-set classifier adapted on an unlabelled
//! test set that mixes known and unknown classes.
//!
//! Everything numerical is generic over [`numerics::Scalar`] (`f32` or
//! `f64`); the aliases below fix it to `f64`, which the CLI uses.

pub mod adapt;
pub mod checkpoint;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod model;
pub mod numerics;
pub mod selfmatch;

pub use error::{Error, Result};

pub type Tensor = numerics::Tensor<f64>;
pub type Dataset = datagen::OpenSetDataset<f64>;
pub type Bundle = model::ModelBundle<f64>;
pub type Start = model::StartingPoint<f64>;
