//! Deterministic discrete-time simulator of AI-mediated decision systems.
//!
//! A [`SystemState`] holds human and AI decision nodes. [`dynamics::advance`]
//! moves it one step: friction falls, AI decision rates scale, tasks are
//! routed by softmax over utility, usage feeds back into quality and
//! complementarity, and sovereignty boundaries are either enforced or
//! eroded. [`metrics`] derives decision-energy, control mass and the
//! sovereignty node from a state; [`verification`] checks the model's
//! properties over randomized configurations; [`sweeps`] runs parameter
//! grids and bisects for the transfer threshold.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dynamics;
pub mod error;
pub mod generate;
pub mod io;
pub mod metrics;
pub mod model;
pub mod plot;
pub mod seed;
pub mod sweeps;
pub mod verification;

pub use config::{load_config, save_config, Scenario, Strictness};
pub use dynamics::{advance, StepTrace};
pub use error::{ConfigError, SimError, ValidationError};
pub use generate::{generate_random_system, ParameterRanges, Range};
pub use metrics::{compute_frame, FrameOptions, MetricsFrame};
pub use model::{
    AuthorityProfile, BoundaryConfig, DecisionNode, DomainClass, DomainMap, EconomyParams, NodeId,
    NodeKind, SystemState,
};
pub use sweeps::{bisect_threshold, grid_sweep, run_trajectory, Grid, SweepSpec, ThresholdResult};
pub use verification::{Harness, PropertyId, PropositionReport, Verdict};
