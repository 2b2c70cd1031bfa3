//! Real-time room occupancy detection.
//!
//! The pipeline turns raw CO2, temperature and dominant-frequency readings
//! into one feature vector per lecture slot, converts the fused frequency to
//! a Sabine reverberation time for the room, and classifies occupancy with
//! an information-gain decision tree (or a plain reverberation threshold).
//!
//! - [`acoustics`]: mean absorption and reverberation time.
//! - [`dataset`]: CSV ingestion, slot windowing, labels, synthetic corpora.
//! - [`id3`]: tree induction, prediction and the model document format.
//! - [`eval`]: day-wise cross validation and feature ablation.
//! - [`detector`]: streaming detector and HTTP status endpoint.
//! - [`cli`]: the `occusense` command line.

pub mod acoustics;
pub mod cli;
pub mod dataset;
pub mod detector;
pub mod eval;
pub mod id3;
