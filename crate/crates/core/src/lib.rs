//! Terrain synthesis toolkit.
//!
//! Procedural noise height maps ([`procgen`]), morphology transfer from real
//! terrain through pixel-space gradient descent on CNN feature statistics
//! ([`nst`]), structural-similarity scoring ([`metrics`]), and the shared
//! height-map representation with its file formats ([`heightfield`]).

pub mod error;
pub mod heightfield;
pub mod metrics;
pub mod nst;
pub mod procgen;
pub mod styles;

pub use error::{Error, Result};
pub use heightfield::HeightMap;
