//! Single-image physical scene pipeline: register object meshes against an
//! observed image, fill them with particles, simulate them with MLS-MPM,
//! carry the motion back to the meshes and composite shaded, shadowed frames
//! over the background plate.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod math;
mod par;
pub mod raster;
pub mod registration;
pub mod render;
pub mod scene;
pub mod spatial;
pub mod sampling;
pub mod mpm;
pub mod deform;
pub mod pipeline;
pub mod fixture;
