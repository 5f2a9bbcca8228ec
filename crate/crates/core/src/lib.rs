//! Training two classifiers under label noise: a from-scratch MLP engine,
//! label-corruption models, the co-regularized joint loss with small-loss
//! selection, and epoch drivers for JoCoR and its comparison methods.

pub mod data;
pub mod dataset;
pub mod error;
pub mod loss;
pub mod matrix;
pub mod nn;
pub mod noise;
pub mod trainers;

pub use dataset::LabeledDataset;
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use nn::{AdamConfig, MlpNetwork};
