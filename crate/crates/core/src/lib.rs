//! Multi-object tracking with a learned appearance descriptor.
//!
//! Detections are associated to tracks by a weighted sum of a normalized
//! centroid distance and an embedding distance, solved with the Hungarian
//! method. The embedding network is trained on artificial triplets cut from
//! annotated sequences, and tracking quality is scored by identity switches
//! per object.

pub mod embednet;
pub mod evaluation;
mod error;
pub mod geometry;
pub mod imaging;
pub mod io;
pub mod rng;
pub mod synth;
pub mod tracker;
pub mod triplet;

pub use error::{Error, Result};
