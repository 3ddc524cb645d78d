//! Geometry-aware near-miss detection and crash occurrence risk estimation.
//!
//! The crate turns cleaned vehicle trajectories into two-dimensional
//! time-to-collision (2D-TTC) events, reduces them to block maxima and fits
//! covariate-linked generalized extreme value models with a hierarchical
//! Bayesian sampler. Everything here is pure computation over in-memory
//! values; file formats and the command line live in the `corisk` crate.
//!
//! The crate is `no_std` (with `alloc`) when built without the default
//! `std` feature.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` style checks reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod blocks;
pub mod detection;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod gev;
pub mod hbsgrp;
pub mod kinematics;
pub mod linalg;
pub mod risk;
pub mod stats;

pub use error::{Error, Result};
