//! Flat-vector multilayer perceptron.

mod init;
mod layout;
mod mlp;
mod optim;
mod params;

pub use init::init_kaiming;
pub use layout::{LayerLayout, LayerSlice, ParamKind};
pub use mlp::{backward, batch_loss, forward, logits, loss_and_backward, loss_ce, predict};
pub use optim::{lr_at_round, sgd_step, sgd_step_in_place, LrSchedule};
pub use params::{Batch, Gradient, Matrix, ParamVector};
