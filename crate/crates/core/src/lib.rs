//! Discrete perception-action loop agents.
//!
//! The crate covers the ground-truth loop ([`pa_loop`]), the agent's
//! hierarchical generative model ([`model`]), exact and mean-field posterior
//! inference ([`exact`], [`variational`]), intrinsic motivations
//! ([`motivation`]), action selection ([`select`]), active inference
//! ([`active`]), the finite-class mixture agent ([`url`]) and an experiment
//! harness ([`harness`]).
//!
//! Fan-out work runs on rayon when the default `parallel` feature is on and
//! sequentially otherwise, with identical results either way (see [`par`]).

// `!(x > 0.0)` is used on purpose so that NaN fails validation too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod active;
pub mod agent;
pub mod error;
pub mod exact;
pub mod harness;
pub mod model;
pub mod motivation;
pub mod pa_loop;
pub mod par;
pub mod prob;
pub mod select;
pub mod url;
pub mod variational;
pub mod view;

pub use error::{Error, Result};
