//! Multi-view latent representations of surface-based fMRI data and trace
//! regression on the cortical mesh.

pub mod autoencoder;
pub mod data;
pub mod error;
pub mod eval;
pub mod matrix_io;
pub mod mesh;
pub mod nn;
pub mod pca;
pub mod representation;
pub mod synth;
pub mod trace;

pub use error::{Error, Result};
