//! Configuration, dispatch and reporting for the `hitlab` command.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod report;
pub mod run;
