//! Coarse-to-fine GUI grounding.
//!
//! A generalist vision-language model (the *scanner*) narrows a
//! high-resolution screenshot down to a small region, and a grounding
//! specialist (the *locator*) places the click point. See the `examples/`
//! directory for one runnable program per capability.

pub mod agents;
pub mod bench;
pub mod cli;
pub mod config;
pub mod geometry;
pub mod pipeline;
pub mod protocol;
