//! Road-aware, two-scale vehicle localization from heterogeneous cellular
//! signal strength.
//!
//! A [`localizer::RadioMap`] is built offline from drive-test sequences: every road is
//! split into gradient-homogeneous sub-segments, each road and sub-segment
//! gets an information-gain-selected subset of aggregate features, and each
//! sub-segment gets per-base-station RSRP curves. Online, a short window of
//! readings is matched to a road, then to a sub-segment of that road, then to
//! a point on the sub-segment's curves.

pub mod baselines;
pub mod bench;
pub mod config;
pub mod curve_fit;
pub mod error;
pub mod features;
pub mod localizer;
pub mod salient;
pub mod segmentation;
pub mod signal;
pub mod synth;

pub use error::{Error, Result};
pub use signal::{Position2D, Scenario, SignalSequence, SignalVector, FLOOR_DBM};
