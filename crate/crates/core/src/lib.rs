//! Toolkit for measuring diachronic semantic change with contextual encoders.
//!
//! The crate is split along the pipeline:
//!
//! * [`corpus`] turns time-stamped documents into normalized, decade-bucketed
//!   pre-training files.
//! * [`encoder`] provides the contextual encoders (a deterministic mock, a toy
//!   trainable masked-LM and an external adapter), continued pre-training and
//!   focus-word embedding extraction.
//! * [`usage`] finds focus-word usages, loads human usage-pair judgments and
//!   assembles per-word similarity matrices.
//! * [`stats`] holds the numerical analysis: cosine similarity, Spearman
//!   correlation, the Mantel permutation test, embedding shift, PCA and
//!   cluster distances.

pub mod corpus;
pub mod digest;
pub mod encoder;
pub mod stats;
pub mod synth;
pub mod usage;

pub use corpus::DecadeLabel;
