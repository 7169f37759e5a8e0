#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Joint signed-distance + semantic implicit field for open-vocabulary
//! navigation, with grid and gradient planners, the noise-bias analysis,
//! and the benchmark harness.

pub mod autograd;
pub mod bias;
pub mod cli;
pub mod embed;
pub mod eval;
pub mod field;
pub mod plan;
pub mod scenegen;
pub mod train;
