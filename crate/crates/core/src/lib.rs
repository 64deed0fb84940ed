//! Single-column model of the atmospheric Ekman layer.
//!
//! The column is discretized with finite volumes whose sub-grid profile is a
//! parabolic spline, coupled at the bottom to Monin-Obukhov surface-layer
//! profiles. Four couplings are provided (see [`surface::SchemeKind`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod banded;
pub mod cli;
pub mod closure;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod harness;
pub mod scalar;
pub mod spline;
pub mod surface;

pub use error::{Error, Result};
