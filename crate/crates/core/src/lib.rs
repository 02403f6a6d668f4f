//! Latent fingerprint identification: image preprocessing, a hybrid
//! convolutional/transformer encoder, angular-margin training and closed-set
//! rank-based matching.

pub mod backbone;
pub mod config;
pub mod error;
pub mod imaging;
pub mod matching;
pub mod pipeline;
pub mod protocol;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
