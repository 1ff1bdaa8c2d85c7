//! Anomaly detection for terminal-area arrival tracks with a 1D
//! convolutional autoencoder.

pub mod airport;
pub mod anomaly;
pub mod autoencoder;
pub mod error;
pub mod features;
pub mod geo;
pub mod pipeline;
pub mod rng;
pub mod selfcheck;
pub mod synth;
pub mod tensor;
pub mod track;
pub mod transfer;

pub use airport::{AirportConfig, RunwayThreshold};
pub use error::{Error, Result};
pub use geo::{haversine_nm, LatLon};
pub use track::{clip_terminal, parse_tracks, time_gaps, write_tracks, Track, TrackPoint, WeightClass};
