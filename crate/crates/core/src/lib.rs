// Validation uses `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clients;
pub mod control;
pub mod decision;
pub mod geometry;
pub mod harness;
pub mod memory;
pub mod mock_analytic;
pub mod perception;
pub mod reflection;
pub mod sim;
