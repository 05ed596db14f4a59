// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod contrast;
pub mod corpus;
pub mod embed;
pub mod evalx;
pub mod lfn;
pub mod lm;
pub mod selftest;
pub mod synth;
