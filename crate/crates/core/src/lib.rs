//! Windowed Bayesian optimization for time-series epidemic control, plus a
//! recurrent predictor that learns optimal controls from the collected
//! windows and rolls them out for new initial settings.
//!
//! Pipeline: [`bo`] solves short control windows with a GP surrogate
//! ([`gp`]), an LCB acquisition optimized by a bandit + random-search sampler
//! ([`acquisition`]) and an Adam polish ([`local_search`]); [`data`] slides the
//! window along the horizon to harvest training pairs; [`rnn`] learns them;
//! [`closed_loop`] rolls the predictor out and compares policies.

pub mod acquisition;
pub mod benchmarks;
pub mod bo;
pub mod closed_loop;
pub mod commands;
pub mod config;
pub mod data;
pub mod epidemic;
pub mod error;
pub mod gp;
pub mod local_search;
pub mod rng;
pub mod rnn;

pub use error::{Error, Result};

/// Formats a float with 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Parses a float written by [`fmt_f64`] (or any Rust float literal).
pub fn parse_f64(s: &str) -> Option<f64> {
    s.trim().parse().ok()
}
