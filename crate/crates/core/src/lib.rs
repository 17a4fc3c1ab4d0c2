//! Tag-vector ("TagBook") representations of unlabeled videos.
//!
//! Videos are described in the space of a social-tag vocabulary by
//! propagating tags from their visual nearest neighbors in a socially tagged
//! source corpus. The resulting vectors support zero-example event detection
//! (matching a textual event description) and few-example detection (a linear
//! SVM over labeled examples).
//!
//! Pipeline, module by module:
//!
//! 1. [`corpus`] ingests features and captions and builds the vocabulary.
//! 2. [`simsearch`] computes cosine similarities and exact neighbor lists.
//! 3. [`tagprop`] refines the source labels and propagates tags to queries.
//! 4. [`events`] builds event models and ranks videos.
//! 5. [`reduce`] shrinks the tag space (frequent tags or PCA).
//! 6. [`evalkit`] scores rankings and descriptions and generates synthetic
//!    benchmarks.

pub mod corpus;
pub mod error;
pub mod evalkit;
pub mod events;
pub mod persist;
pub mod reduce;
pub mod simsearch;
pub mod tagprop;

pub use corpus::{SourceCorpus, TagVocabulary, VideoId};
pub use error::{Error, Result};
pub use tagprop::{PropagationConfig, TagVector, Variant};
