//! Core library for auditing and retraining a loan-decision classifier with
//! human fairness feedback.
//!
//! The crate is split along the pipeline:
//!
//! * [`data`] loads, imputes, encodes, splits and bins tabular application data.
//! * [`gbdt`] is a second-order gradient-boosted tree classifier with instance
//!   weights and feature weights.
//! * [`fairness`] computes accuracy plus group, individual and counterfactual
//!   fairness metrics.
//! * [`integration`] turns feedback logs into retrained models and metric series.
//! * [`session`] holds the per-participant interactive state (locks, undo).

pub mod artifacts;
pub mod data;
pub mod fairness;
pub mod gbdt;
pub mod integration;
pub mod session;
pub mod synth;

mod outcome;

pub use outcome::Outcome;
