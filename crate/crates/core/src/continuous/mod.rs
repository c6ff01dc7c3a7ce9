//! Two feed-forward networks, one per view, trained end to end on F̂_β.
//!
//! Backpropagation is written out by hand: the F̂_β term reaches each
//! example's logit through the batch gradient constants (see
//! [`gradient_constants`]), the wall and magnitude penalties are added on
//! top, and every layer is differentiated explicitly.

mod loss;
mod mlp;
mod train;

pub use loss::{
    final_layer_fbeta_grads, gradient_constants, loss_and_grads, GradConstants, LossOutput,
};
pub use mlp::{sigmoid, Dense, Mlp, MlpPair, SavedLayer, SavedModel, SavedNet, Trace};
pub use train::{
    initial_pair, joint_flags, predict, split_rows, train, train_from, Adam, EpochRecord,
    StopReason, TrainConfig, TrainHistory,
};
