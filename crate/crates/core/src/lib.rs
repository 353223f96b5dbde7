//! Relevance scoring for knowledge-base triples of type-like relations
//! (person/profession, person/nationality).
//!
//! A triple is scored in `{0..7}` by combining two feature families:
//!
//! - latent word vectors for the person (CBOW with negative sampling, trained on
//!   an entity-annotated sentence corpus) and for the value (optionally replaced
//!   by pre-trained GloVe vectors),
//! - explicit knowledge-base predicates for the person, reduced by incremental PCA.
//!
//! Each family feeds an RBF-kernel epsilon-SVR trained by SMO; the two raw scores
//! are then combined (fixed average or least-squares weights), rounded and clamped.
//! The [`eval`] module provides the cup metrics, two baselines and k-fold CV.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*64` / `*32`
//! aliases below fix the precision.

pub mod corpus;
pub mod embed;
pub mod error;
pub mod eval;
pub mod kbfeat;
pub mod linalg;
pub mod scalar;
pub mod scorer;
pub mod svr;
pub mod warning;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use warning::{Warning, Warnings};

pub type EmbeddingTable64 = embed::EmbeddingTable<f64>;
pub type EmbeddingTable32 = embed::EmbeddingTable<f32>;
pub type HybridLookup64 = embed::HybridLookup<f64>;
pub type HybridLookup32 = embed::HybridLookup<f32>;
pub type PcaModel64 = kbfeat::PcaModel<f64>;
pub type PcaModel32 = kbfeat::PcaModel<f32>;
pub type SvrModel64 = svr::SvrModel<f64>;
pub type SvrModel32 = svr::SvrModel<f32>;
pub type Pipeline64 = scorer::Pipeline<f64>;
pub type Pipeline32 = scorer::Pipeline<f32>;
pub type KbFeatures64 = scorer::KbFeatures<f64>;
pub type KbFeatures32 = scorer::KbFeatures<f32>;
