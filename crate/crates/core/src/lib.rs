#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod cli;
pub mod config;
pub mod diophantine;
pub mod error;
pub mod kam;
pub mod linalg;
pub mod propagator;
pub mod report;
pub mod symbol;
