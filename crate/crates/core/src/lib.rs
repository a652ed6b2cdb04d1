//! Clean versus adversarial risk trade-offs: loss models, inner attacks,
//! influence-function approximations, trade-off curves and adversarially
//! trained linear regression.

pub mod attack;
pub mod data;
pub mod error;
pub mod ifa;
pub mod linalg;
pub mod linreg;
pub mod models;
pub mod optim;
pub mod tradeoff;

pub use nalgebra;

pub use attack::{AttackOutcome, AttackSpec, Norm, Perturbation};
pub use error::{Error, Result};
pub use models::{LabeledDataset, LossModel, ParamBlock, ParameterVector, Role};
pub use optim::OptimConfig;
