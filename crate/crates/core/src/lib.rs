#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

//! Laboratory for self-play collapse under asymmetric action-space
//! perturbations in small imperfect-information games.

pub mod agents;
pub mod error;
pub mod game;
pub mod harness;
pub mod metrics;
pub mod perturb;
pub mod policy;
pub mod selfplay;
pub mod stats;
pub mod tree;

pub use error::{Error, Result};
