//! Panoptic video scene graph toolkit: mask tubes over run-length encoded
//! masks, an IOU tracker, ground-truth assignment, the triplet recall metrics,
//! a non-learned relation baseline, and a seeded synthetic scene generator.

pub mod assign;
pub mod baseline;
pub mod bundle;
pub mod cli;
pub mod error;
pub mod fixtures;
pub mod hungarian;
pub mod metrics;
pub mod model;
pub mod rle;
pub mod span;
pub mod synth;
pub mod track;

pub use error::{Error, Result};
