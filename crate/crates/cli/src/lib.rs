//! Library half of the `mz-workbench` command-line tool.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod args;
pub mod commands;
pub mod io;
pub mod report;
