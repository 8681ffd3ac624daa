//! Neural models over frozen embedding pairs.
//!
//! Two architectures share one training loop: a linear head with input
//! dropout on `[e1 | e2]`, and an adapter model where each side passes
//! through its own residual bottleneck block before an MLP head over the
//! adapted and enriched features. Everything is f64 with hand-written
//! backward passes.

pub mod checkpoint;
pub mod layers;
pub mod loss;
pub mod model;
pub mod optim;
pub mod train;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointHeader};
pub use layers::{Mode, NetRng, Param};
pub use model::{Architecture, Network, NetworkSpec, TrainConfig};
pub use optim::{AdamW, AdamWConfig};
pub use train::{fit, predict, train_network, EpochLog};
