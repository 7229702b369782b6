//! Core algorithms for turning sparse reconstructions of indoor walkthrough
//! videos into navigation training data.
//!
//! Everything in this crate is pure computation over in-memory values and
//! only needs `alloc`. File formats that require a filesystem live in the
//! `walkforge` companion crate; the COLMAP text layout is handled here because
//! it is a plain `&str` to model conversion.

#![cfg_attr(not(any(feature = "std", test)), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod camgeom;
pub mod captioning;
pub mod episodes;
pub mod merge;
pub mod model;
pub mod numfmt;
pub mod promptgen;
pub mod sampling;
pub mod synth;
pub mod viewchange;

pub use nalgebra::{UnitQuaternion, Vector3};

/// 3-vector of `f64`, used for positions and directions throughout.
pub type Vec3 = Vector3<f64>;
