//! Toolkit for next-event-prediction (NEP) data engineering.
//!
//! Turns captioned videos into past/future training instances, generates a
//! multi-hop multiple-choice benchmark from scene-annotated videos, scores
//! subject models on that benchmark and exports tuning datasets.
//!
//! Every LLM call goes through [`gateway::Gateway`], which can be backed by
//! an HTTP chat-completion endpoint or by the offline [`gateway::MockBackend`].

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod config;
pub mod eval;
pub mod exec;
pub mod gateway;
pub mod jsonl;
pub mod model;
pub mod pipeline;
pub mod prompts;
pub mod segment;
pub mod text;
pub mod tuning;
pub mod validate;

pub use exec::Execution;
pub use model::*;
pub use validate::{Rule, Validate, Violation};
