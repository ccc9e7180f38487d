//! Synthetic 3D lane scenes, view projections, lane-width pairing, the
//! regressor losses, height reconstruction and lane evaluation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod cli;
pub mod error;
pub mod evaluate;
pub mod io;
pub mod losses;
pub mod model;
pub mod pairing;
pub mod plot;
pub mod projection;
pub mod reconstruct;
mod rng;
pub mod synth;

pub use error::{Error, Result};
pub use model::{Anchor, AnchorSet, CameraPose, Intrinsics, Lane2D, Lane3D, PairMap, Point2D, Point3D, Scene};
