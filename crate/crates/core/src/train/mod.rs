//! Losses, the optimizer, and the training loop with its three regimes.

mod config;
mod fit;
mod infer;
mod loss;
mod optim;

pub use config::{Regime, TrainConfig};
pub use fit::{fit, train_step, validate, EpochStats, Phase, StepLosses, TrainReport};
pub use infer::{evaluate_predictions, predict_all, Prediction};
pub use loss::{answer_loss, answer_nll, explanation_loss, LOG_FLOOR};
pub use optim::Adam;
