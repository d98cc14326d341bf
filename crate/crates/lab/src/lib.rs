//! Experiment runner for the toy robust-risk study: JSON configs, figure
//! demos, theorem checks and metric sweeps, written as CSV, SVG and JSONL.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod demos;
pub mod error;
pub mod report;
pub mod svg;
pub mod sweep;
pub mod verify;
