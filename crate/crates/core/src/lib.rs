//! Spatial generalized linear mixed models for areal data.
//!
//! The crate covers the whole pipeline: areal graphs and their CAR precision
//! ([`graph`]), the Moran operator and its eigenbasis ([`basis`]), model
//! specification and exact log densities ([`model`]), the classical GLM
//! baseline ([`glm`]), MCMC fitting ([`sampler`]), data simulation
//! ([`simulate`]), posterior summaries ([`summary`]) and the `sglmm`
//! command-line tool ([`cli`]).

pub mod basis;
pub mod cli;
pub mod error;
pub mod glm;
pub mod graph;
pub mod io;
pub(crate) mod linalg;
pub mod model;
pub mod sampler;
pub mod simulate;
pub mod study;
pub mod summary;

pub use basis::{DesignMatrix, MoranBasis, RankRule, RhzBasis};
pub use error::{Error, Result};
pub use glm::{irls_fit, GlmFit};
pub use graph::{Graph, PrecisionMatrix};
pub use linalg::{leading_eigenpairs, LeadingTarget};
pub use model::{EffectBasis, Family, ModelSpec, Parameterization, ParameterState, PriorSet};
pub use sampler::{fit, Chain, McmcConfig};
