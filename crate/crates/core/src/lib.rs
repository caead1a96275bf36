//! Panorama fusion toolkit.
//!
//! Builds navigable colored point-cloud worlds from a chain of generated
//! 360° panoramas: layered depth panoramas separate occluders from their
//! background, neighboring spheres are opened toward each other, the gap is
//! filled from an intermediate viewpoint and its monocular depth is blended
//! harmonically onto the known geometry.

// `!(a < b)` is deliberate wherever NaN must be rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blend;
pub mod codec;
mod error;
pub mod evalkit;
pub mod filter;
pub mod fusion;
pub mod geom;
pub mod ldp;
pub mod oracle;
pub mod render;
pub mod world;

pub use error::{Error, Result};
