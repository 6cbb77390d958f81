//! Class-agnostic monocular distance estimation from the change of an
//! object's projected height across keyframes and the camera's ego-motion.
//!
//! The analytic core lives in [`solver`]; [`kinematics`] is the forward
//! simulator used to check it. The remaining modules cover dataset
//! ingestion, keyframe tracking, evaluation and network-input assembly.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alignment;
pub mod bbox;
pub mod config;
pub mod features;
pub mod ingest;
pub mod kinematics;
pub mod metrics;
pub mod pipeline;
pub mod solver;
pub mod simulate;
pub mod synth;
pub mod trackbuf;

pub use bbox::BBox;
pub use solver::{
    build_system, estimate, range_to_distance, size_ratios, solve, solve_q2_closed_form,
    DistanceEstimate, EstimateStatus, KeyframeTriple, LinearSystem, MotionOrder, SizeRatios,
    TrackId, DEFAULT_EPS_SINGULAR,
};
