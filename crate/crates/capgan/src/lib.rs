//! Unpaired image captioning toolkit.
//!
//! A prefix-prompted autoregressive caption generator is trained without any
//! human-labeled image-caption pairs: an adversarial discriminator scores how
//! natural a caption reads, a contrastive-embedding reward module scores how
//! well it matches the image, and self-critical policy gradients carry both
//! signals into the generator.
//!
//! The crate is a library first; see the `examples/` directory for one
//! runnable program per capability and `src/bin/capgan.rs` for the thin CLI
//! that strings them into a pipeline (`embed-corpus`, `aggregate`,
//! `init-train`, `train`, `infer`, `eval`, `baseline`, `explain`, `sweep`).

pub mod container;
pub mod embeddings;
pub mod error;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};
