//! Latent-model moments, identifiability checks and moment-based estimators
//! for composite time series and spatial processes.

pub mod error;
pub mod estimators;
pub mod exec;
pub mod harness;
pub mod identifiability;
pub mod models;
pub mod moments;
pub mod optim;
mod quad;
pub mod simulate;

pub use error::{Error, Result};
pub use exec::Execution;
pub use models::{build_model, BlockKind, BlockSpec, Domain, IdentClass, IdentLabel, LatentModel};
pub use moments::{MomentKind, MomentVector, WvConvention, WvOptions};
