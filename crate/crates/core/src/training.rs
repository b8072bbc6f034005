//! Negative-sampled binary cross-entropy training with Adam, plus
//! checkpointing that makes interrupted runs resume bit-for-bit.

mod adam;
mod checkpoint;
mod loss;
mod sampling;
mod trainer;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint,
    CHECKPOINT_VERSION,
};
pub use loss::{bce_loss, bce_loss_on_tape, PROB_CLAMP};
pub use sampling::sample_labels;
pub use trainer::{encode_corpus, train, TrainConfig, Trainer, TrainingExample};
