//! Differentiable network layers with hand-written backward passes.

pub mod checkpoint;
pub mod layers;
pub mod net;
pub mod nonlocal;
pub mod optim;
pub mod params;

pub use checkpoint::Checkpoint;
pub use layers::{graph_max_pool, graph_upsample, GraphConv, Linear};
pub use net::{ForwardCache, LocalToGlobalNet, NetConfig, SkipMerge};
pub use nonlocal::NonLocalBlock;
pub use optim::{Adam, AdamConfig};
pub use params::{Grads, NamedArray, ParamId, ParamSet};
