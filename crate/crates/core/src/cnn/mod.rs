//! Multi-branch 2D CNN with hand-written backpropagation.

mod adam;
mod layers;
mod model;
mod tensor;
mod train;

pub use adam::{Adam, AdamConfig};
pub use layers::{
    relu_backward, relu_inplace, softmax, softmax_cross_entropy, Conv2d, Dense, Dropout, MaxPool2, Padding,
};
pub use model::{
    load_checkpoint, save_checkpoint, ArchConfig, CnnModel, FIRST_FILTERS, MIN_INPUT_SIDE, REGION_SIZES, SECOND_FILTERS,
};
pub use tensor::{xavier_init, Param, Tensor};
pub use train::{
    argmax, evaluate, predict, train, train_with_validation, EarlyStopping, EpochStats, History, ImageSet, Prediction,
    StopDecision, TrainConfig, TrainError,
};

#[derive(Debug, thiserror::Error)]
pub enum CnnError {
    #[error("input {height}x{width} is smaller than the 6x6 minimum")]
    InputTooSmall { height: usize, width: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch { expected: Vec<usize>, found: Vec<usize> },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
