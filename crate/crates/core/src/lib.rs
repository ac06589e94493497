//! Proximity inference from co-located WiFi scans.

pub mod config;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod ingest;
pub mod io;
pub mod model;
pub mod models;
pub mod pairing;
mod par;
pub mod pipeline;
pub mod rng;
pub mod stats;
pub mod synth;
pub mod time;

pub use error::{Error, Result};
