//! Semi-discrete optimal and worst transport on convex planar domains.

pub mod density;
pub mod diagram;
pub mod error;
pub mod geometry;
pub mod hull;
pub mod linalg;
pub mod measure;
pub mod par;
pub mod oracle;
pub mod solver;
pub mod stats;

pub use error::{Error, Result};
