//! Math core for anchor-free oriented object detection on quadrilateral
//! boxes: exact geometry with oriented center-ness, FPN grid target
//! encoding, training losses with analytic gradients, corner prediction
//! strategies, rotated NMS post-processing, VOC-style evaluation, aerial
//! dataset patch tooling, and a deterministic desk-scale trainer.

pub mod assignment;
pub mod data;
pub mod eval;
pub mod geometry;
pub mod grid;
pub mod losses;
pub mod postprocess;
pub mod rng;
pub mod strategies;
pub mod toy;

pub use geometry::{Point, Quad};
pub use grid::{FpnLevel, GridLocation, RegressionTarget};
pub use postprocess::Detection;
