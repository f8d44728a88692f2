//! Decentralized weighted assignment with the ALMA heuristic and its
//! repeated-game learner, plus exact and greedy baselines, benchmark
//! generators, fairness metrics, a meeting-scheduling domain and an
//! experiment harness.

pub mod baselines;
pub mod engine;
pub mod error;
pub mod generators;
pub mod harness;
pub mod learning;
pub mod meetings;
pub mod metrics;
pub mod model;
pub mod rng;

pub use engine::{backoff_probability, run_stage, BackoffModel, StageArena, StageOutcome, UnitArena};
pub use error::{Error, Result};
pub use learning::{
    evaluate, init_learner, starting_resource_stabilization, train, AgentLearnerState, LossInit, RepeatedGame,
    Trace,
};
pub use model::{preference_order, validate_allocation, Allocation, AssignmentInstance, RunConfig};
