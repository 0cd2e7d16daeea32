//! Toolkit for reverse-engineering LEO satellite-to-terminal scheduling.
//!
//! The pipeline works from two public inputs: terminal obstruction maps
//! (123x123 sky bitmaps marking trails of recently serving satellites) and
//! TLE catalogs. From those it identifies which satellite served a terminal
//! in each 15-second scheduling slot, characterizes the global scheduler's
//! preferences, and trains an offline random-forest approximation of it.
//! A synthetic constellation simulator provides ground truth for validation.

pub mod analytics;
pub mod cli;
pub mod manifest;
pub mod matching;
pub mod model;
pub mod obstruction;
pub mod orbital;
pub mod plot;
pub mod sim;
pub mod trace;
