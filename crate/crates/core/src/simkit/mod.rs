//! Synthetic multi-device walking sequences with known ground truth.
//!
//! The body follows a smooth heading process and a mean-reverting speed
//! profile, with a gait oscillation superimposed. Each device observes the
//! body's gravity-free acceleration in its own slowly drifting frame, plus
//! its own articulation (arm swing, head bob, hand jitter) and white noise.
//! Scenario events remove a device, stop the walker, or shake everything.

mod config;
mod emit;
mod simulate;

pub use config::{
    Articulation, ArticulationKind, DeviceSpec, EventKind, GaitSpec, HeadingProcess, NoiseSpec,
    SimConfig, SimEvent, SpeedProfile,
};
pub use emit::{emit_dataset, load_split, DatasetConfig, DatasetSummary, Split, SplitCounts};
pub use simulate::{simulate, DenseTruth, SimOutput, BASE_RATE_HZ};

use std::path::PathBuf;

use thiserror::Error;

use crate::dataio::DataError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
