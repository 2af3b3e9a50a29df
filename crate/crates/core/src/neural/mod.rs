//! Small deterministic deep-learning substrate: reverse-mode autodiff over
//! 2-D tensors, transformer layers, embeddings, ADAM and a generic trainer.

pub mod checkpoint;
pub mod embed;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod optim;
pub mod params;
pub mod train;

pub use graph::{Graph, NodeId};
pub use optim::{adam_step, AdamConfig, LrSchedule};
pub use params::{Gradients, ParamId, ParamLayout, ParamStore};
