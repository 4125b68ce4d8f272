//! Desk-scale training harness: synthetic scenes, a hand-differentiated
//! model over pooled pixel windows, a deterministic SGD loop, and the
//! comparison/capacity experiment reports.

pub mod model;
pub mod report;
pub mod scene;
pub mod train;
