//! Reconstruction of weighted directed networks from the cross-power spectral
//! densities of their noise-driven consensus dynamics `x' = -L x + w`.
//!
//! The crate covers the whole chain: graph and Laplacian construction
//! ([`graph`]), stochastic simulation with optional node grounding
//! ([`simulate`]), analytic and Welch CPSD matrices ([`spectra`]), the
//! recovery formulas ([`reconstruct`]), scoring against ground truth
//! ([`metrics`]) and file-based orchestration ([`pipeline`]).

pub mod error;
pub mod graph;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod reconstruct;
pub mod simulate;
pub mod spectra;

pub use error::{Error, Result};
pub use graph::{Edge, RandomGraphParams, Role, SystemMatrix, WeightedDigraph};
pub use metrics::EvalResult;
pub use pipeline::{run_pipeline, GraphSource, PipelineConfig, PipelineOutput};
pub use reconstruct::{Mode, ReconstructOptions, ReconstructionReport};
pub use simulate::{NoiseKind, NoiseModel, TimeSeriesEnsemble};
pub use spectra::{CpsdMatrix, Provenance, WelchParams, Window};
