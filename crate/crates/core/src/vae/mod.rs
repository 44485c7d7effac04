//! Variational autoencoder over one-hot household rows.

pub mod model;
pub mod persist;

pub use model::{EncodeTape, VaeConfig, VaeGradients, VaeModel, N_BLOCKS};
pub use persist::{from_bytes, load_model, model_fingerprint, save_model, to_bytes};
