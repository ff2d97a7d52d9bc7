//! Multi-device inertial odometry: a small reverse-mode autodiff engine, a
//! synthetic multi-device walking simulator, a shared/private feature
//! network with contrastive training, and trajectory evaluation.

// `!(x > 0.0)` deliberately rejects NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataio;
pub mod evaluator;
pub mod losses;
pub mod network;
pub mod plot;
pub mod simkit;
pub mod tensor;
pub mod trainer;

pub use dataio::{DataError, GroundTruth, SampleStream, SequenceBundle, WindowBatch, WindowConfig};
pub use evaluator::{EvalConfig, EvalError, EvalReport, Trajectory};
pub use losses::{LossWeights, OrthMode};
pub use network::{ModelConfig, NetworkError, ParamStore};
pub use simkit::{DatasetConfig, SimConfig, SimError, Split};
pub use tensor::{Tape, Tensor, TensorError};
pub use trainer::{Ablation, Checkpoint, TrainConfig, TrainError, TrainLog, TrainedModel};
