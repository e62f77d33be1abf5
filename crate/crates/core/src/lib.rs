//! Variational autoencoders for collaborative filtering with implicit feedback.
//!
//! The crate is `no_std` (it needs `alloc`) and holds every numerical piece of
//! the pipeline: dense matrix arithmetic and a portable RNG, MovieLens-style
//! data preparation, movie feature assembly, the MLP VAE with hand-written
//! backpropagation, the movie and hybrid variants built on it, ranking
//! metrics, and clustering/projection for embedding plots.
//!
//! File formats, CSV ingestion and the command line live in the `hyvae` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod dataset;
pub mod error;
pub mod features;
pub mod hvae;
pub mod metrics;
pub mod mvae;
pub mod ndmath;
pub mod optim;
pub mod vae;
pub mod viz;

pub use error::{Error, Result};
pub use ndmath::{Matrix, RngStream};
