#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod hilbert;
pub mod par;
pub mod series;
pub mod volterra;
pub mod conv;
pub mod mori;
pub mod sim;
pub mod spectral;
pub mod phase;
