//! Hierarchical multi-robot motion planning: region-level MAPF over an
//! adaptively refined workspace grid guides per-robot sampling planners,
//! with local refinement to resolve conflicts and multi-robot fallbacks.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod conflict;
pub mod decomposition;
pub mod fallback;
pub mod geometry;
pub mod guided;
pub mod mapf;
pub mod orchestrator;
pub mod resolution;
pub mod trajectory;
