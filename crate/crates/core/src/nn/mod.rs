//! A small neural-network stack: tensors, layers with hand-written
//! gradients, the two positioning regressors and Adam training.

mod checkpoint;
pub mod layers;
mod model;
pub mod nets;
pub mod optim;
pub mod tensor;

pub use checkpoint::{MAGIC, VERSION};
pub use layers::{Layer, Mode, Sequential};
pub use model::{fine_tune, mse_loss, train, Arch, InputScaling, LrSchedule, Model, Normalizer, TrainConfig, TrainReport};
pub use nets::{build_cir_net, build_pg_net, CirNetConfig, PgNetConfig};
pub use optim::{Adam, AdamConfig};
pub use tensor::{Param, Scalar, Tensor};
