pub mod budget;
pub mod cells;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod heads;
pub mod model;
pub mod nor;
pub mod params;
pub mod synthetic;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use model::{LayerFamily, Model, ModelConfig, Task};
pub use params::{ParamId, ParamStore};
pub use tensor::{Gradients, Tape, Tensor, Var};
pub use train::{train, TrainConfig};
