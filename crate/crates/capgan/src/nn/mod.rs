//! Minimal f64 neural-network stack: dense matrices, a reverse-mode tape,
//! transformer blocks, and AdamW. Single-threaded by design so training is
//! bit-reproducible.

pub mod adamw;
pub mod graph;
pub mod layers;
pub mod mat;
pub mod params;

pub use adamw::{warmup_lr, AdamW, AdamWConfig};
pub use graph::{Graph, Var};
pub use layers::{KvCache, Transformer, TransformerConfig};
pub use mat::{argmax, log_softmax_in_place, softmax_in_place, Mat};
pub use params::{gaussian_init, standard_normal, ParamEntry, ParamId, Params};
