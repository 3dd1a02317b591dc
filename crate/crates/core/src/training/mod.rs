//! The reconstruction objective and the optimizer loop.

mod loss;
mod train;

pub use loss::{ecml_loss, ecml_loss_on_tape, tile_matrix, LossReport};
pub use train::{final_checkpoint_path, train, train_log_path, EpochReport, TrainConfig, TrainOutcome, Trainer};
#[cfg(test)]
use train::percentile;
