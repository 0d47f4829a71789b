//! Contrastive self-supervised node embeddings from opposing low-pass and
//! high-pass spectral views.
//!
//! The crate is organised bottom-up:
//!
//! - [`graph`]: CSR graphs, normalized operators, homophily, loaders, SBM.
//! - [`autodiff`]: a dense-matrix tape with reverse-mode gradients and Adam.
//! - [`spectral`]: Chebyshev interpolation filters and their parameterizations.
//! - [`signals`]: Dirichlet energy, spectral signal trends, composite features.
//! - [`model`]: the two-view encoder and its three loss terms.
//! - [`trainer`]: self-supervised pretraining, linear probing, splits and the
//!   concentration-bound Monte Carlo check.
//! - [`experiment`]: multi-seed runs, ablation tables and sweeps.

pub mod autodiff;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod matrix;
pub mod model;
pub mod signals;
pub mod spectral;
pub mod trainer;

pub use error::{LohaError, Result};
pub use graph::{Graph, SparseOperator};
pub use matrix::Matrix;
