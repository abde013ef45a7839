//! The feature-fusion convolutional classifier and its training machinery:
//! hand-written forward/backward passes over two convolutional branches, an
//! Adam optimizer, mini-batch training with best-validation selection, and
//! combined-prediction decision rules.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod tensor;
pub mod train;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use gradcheck::{GradCheck, GradCheckReport};
pub use metrics::{combine_predictions, eval_report, CombineRule, ConfusionMatrix, EvalReport};
pub use model::{Batch, BranchMode, FusionNet, Grads, Trace};
pub use tensor::Tensor;
pub use train::{
    accuracy, evaluate, load_batches, train, EpochStats, Evaluation, MemSource, RecordSource,
    TrainConfig, TrainOutcome,
};
