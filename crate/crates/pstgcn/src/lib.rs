//! Progressive spatio-temporal graph convolutional networks for
//! skeleton-sequence classification.
//!
//! The crate provides the skeleton graph machinery, a small dense tensor
//! core with exact backward rules, the attention-augmented ST-GCN model,
//! the progressive width/depth topology search, static parameter/FLOP
//! accounting, and a training harness with a CLI.

pub mod batchnorm;
pub mod checkpoint;
pub mod complexity;
pub mod config;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod net;
pub mod ops;
pub mod optim;
pub mod pipeline;
pub mod search;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Parameter, Tensor};
