//! Composition and placement of heterogeneous sensor teams over polygonal
//! mission spaces with obstacles.
//!
//! A greedy pass over a lattice of candidate positions seeds a projected
//! gradient ascent over agent positions and relaxed membership variables;
//! curvature-based bounds certify the greedy seed and the final team.

pub mod bounds;
pub mod error;
pub mod field;
pub mod geometry;
pub mod greedy;
pub mod oracle;
pub mod pga;
pub mod pipeline;
pub mod scenario;
pub mod sensing;

pub use error::{Error, Result};
