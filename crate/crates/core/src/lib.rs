//! Joint-embedding predictive pretraining for stochastic polymer graphs.
//!
//! The crate builds weighted polymer graphs from monomer strings, splits
//! them into context and target patches, pretrains a weighted directed
//! message-passing encoder to predict target-patch embeddings from a
//! context embedding, and finetunes the encoder on scarce labels.

pub mod chem;
pub mod cli;
pub mod dataset;
pub mod diff;
pub mod encoder;
pub mod encoding;
pub mod partition;
pub mod pipeline;
pub mod polymer;
pub mod pretrain;
pub mod seed;
pub mod stamp;
