//! Hourly solar irradiance forecasting.
//!
//! The pipeline: load or synthesize gridded hourly GHI + wind tables
//! ([`data`], [`synth`]), window them into supervised datasets for a chosen
//! lead time ([`features`]), train encoder-decoder recurrent nets, a
//! feed-forward baseline ([`neural`]) or gradient-boosted trees ([`gbrt`]),
//! and score forecasts in physical units across lead times ([`eval`]).
//! Trained models round-trip through a small binary format ([`persist`]).

pub mod data;
pub mod error;
pub mod eval;
pub mod features;
pub mod gbrt;
pub mod neural;
pub mod numerics;
pub mod persist;
pub mod synth;

pub use error::{Error, Result};
