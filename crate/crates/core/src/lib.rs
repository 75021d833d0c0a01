//! DRAM bank models for 2D DDR4 and monolithic-3D organizations: geometry,
//! bitline transients, timing, energy and a close-page controller simulator.

pub mod circuit;
pub mod config;
pub mod energy;
pub mod error;
pub mod fit;
pub mod geometry;
pub mod model;
pub mod reference;
pub mod report;
pub mod sim;
pub mod timing;
pub mod trace;

pub use error::{Error, Result};
