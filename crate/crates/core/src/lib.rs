//! Distributionally robust multi-period optimal power flow with causal
//! affine recourse policies.

pub mod dro_core;
pub mod error;
pub mod evaluation;
pub mod horizon_model;
pub mod io;
pub mod linexpr;
pub mod mpc;
pub mod opf_assembler;
pub mod policy;
pub mod qp;

pub use error::{Error, Result};
