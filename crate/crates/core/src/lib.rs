//! Continuous-time open quantum walks on graphs.
//!
//! The crate covers model definition ([`model`]), the Lindblad semigroup and
//! its path expansion ([`semigroup`]), quantum trajectory sampling
//! ([`trajectory`]), first-passage maps and occupation times ([`passage`]),
//! and irreducibility and recurrence classification ([`classify`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod error;
pub mod fixtures;
pub mod format;
pub mod linalg;
pub mod model;
pub mod random;
pub mod passage;
pub mod semigroup;
pub mod stats;
pub mod superop;
pub mod trajectory;

pub use classify::{
    check_discrete_irreducible, check_irreducible, classify_trichotomy, return_probability_extremes, ClassificationReport,
    IrreducibilityVerdict, TrichotomyCase,
};
pub use error::{ErrorClass, Result, WalkError};
pub use model::{build_walk, classical_embed, validate, BlockState, SitedState, VertexId, WalkModel, WalkSpec};
pub use passage::{
    dwell_integral, expected_occupation, first_passage_map, jump_kernel, path_operator, reach_probability, Occupation,
    PassageMap, TimedPath,
};
pub use semigroup::{dyson_partial, evolve, lindblad_apply};
pub use superop::SuperOp;
pub use trajectory::{estimate, simulate, EstimateReport, Query, TrajectoryRecord};
