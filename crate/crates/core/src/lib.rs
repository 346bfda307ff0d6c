//! Core algorithms for event-conditioned story generation.
//!
//! Everything here is `no_std` + `alloc`: the autodiff tensor engine, event
//! extraction from dependency parses, corpus construction, the fusion model
//! and the evaluation metrics. File IO and the command line live in the
//! `storyline` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod corpus;
pub mod events;
pub mod metrics;
pub mod model;
pub mod tensor;
