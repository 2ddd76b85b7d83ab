//! MorphFlow: TV-L1 optical flow for volume images on morphological wavelet
//! lattices.
//!
//! Both images are decomposed with min/max lifting through the
//! Cartesian → FCC → tilted cuboid cycle; the flow is solved from the coarsest
//! cubic level upwards on every intermediate lattice, with displacement fields
//! carried between lattices by zero-detail synthesis.

pub mod error;
pub mod geometry;
pub mod io;
pub mod lattice;
pub mod lifting;
pub mod metrics;
pub mod pipeline;
pub mod synth;
pub mod tvl1;
pub mod volume;

pub use error::{Error, Result};
pub use lattice::{LatticeDescriptor, LatticeKind};
pub use lifting::LiftingMode;
pub use pipeline::{MorphFlowConfig, Pyramid};
pub use tvl1::SolverParams;
pub use volume::{DisplacementField, Volume};
