//! Individual-fairness test adequacy for small feedforward classifiers.
//!
//! The pipeline: pair samples across a sensitive attribute
//! ([`data`]), find neurons whose activation differences separate fair from
//! unfair pairs ([`selection`]), measure how much of each adequacy metric's
//! value range a test suite covers ([`metrics`], [`coverage`]), generate new
//! unfair pairs ([`generation`]) and pick augmentation sets that reduce
//! discrimination under retraining ([`enhancement`]).

pub mod bench;
pub mod coverage;
pub mod data;
pub mod enhancement;
pub mod error;
pub mod experiment;
pub mod generation;
pub mod metrics;
pub mod nn;
mod par;
pub mod selection;
pub mod stats;

pub use error::{Error, Result};
