//! First- and quasi-second-order optimizers used by the training loops.

pub mod adamw;
pub mod lbfgs;
pub mod plateau;

pub use adamw::{AdamW, AdamWConfig};
pub use lbfgs::{lbfgs, LbfgsConfig, LbfgsResult};
pub use plateau::{Plateau, PlateauConfig};
