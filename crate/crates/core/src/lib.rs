//! Unique-word OFDM with a PAPR-reducing generator matrix.
//!
//! The crate builds the structural matrices of a UW-OFDM system, designs
//! the generator matrix (null-space basis times a Procrustes-optimized
//! factor), and simulates PAPR, BER and spectral behaviour of the resulting
//! waveforms alongside PTS and SLM.

pub mod config;
pub mod error;
pub mod linops;
pub mod precoder;
pub mod txchain;
pub mod reduction;
pub mod impairments;
pub mod receiver;
pub mod metrics;
pub mod harness;

pub use error::{Error, Result};
