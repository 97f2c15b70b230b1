//! Matrix gain-scheduling of very strictly passive subcontrollers, applied
//! to trajectory tracking with a two-link planar arm.
//!
//! The pipeline runs [`synthesis`] (LQR plus KYP realization per
//! linearization point), assembles a [`gs_controller::GsController`] with
//! the scheduling matrices of [`scheduling`], simulates the closed loop in
//! [`sim`] and audits the passivity inequality on the run.

// `!(x > 0.0)` is how inputs are checked so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod gs_controller;
pub mod linalg;
pub mod scheduling;
pub mod signals;
pub mod sim;
pub mod synthesis;

pub use error::{Error, Result};
