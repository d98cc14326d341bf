#![cfg_attr(not(test), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]
extern crate alloc;

pub mod error;
pub mod mlp;
pub mod objectives;
pub mod rng;
pub mod simplex;
pub mod theorems;
pub mod toydist;
pub mod trainer;

pub use error::{Error, Result};
pub use simplex::{MetricSpec, ProbVec};
