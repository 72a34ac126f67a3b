//! Post-processing for chargrid-style OCR: turn dense per-pixel network
//! outputs into character boxes and words, encode ground-truth pages into the
//! same output space, score predictions with a location-aware word
//! recognition rate, and generate synthetic corpora with tensor-space noise.
//!
//! The decode pipeline is built for the ultra-dense regime where a page holds
//! thousands of characters and the box mask emits a candidate per pixel:
//! candidates are first reduced by a linear-time cycle filter over the
//! center-prediction graph ([`detect::graphcore_filter`]), then deduplicated
//! by NMS, labeled from the chargrid, and clustered into words through
//! reflection proposals and connected components ([`words::decode_page`]).
//!
//! Everything numeric is generic over a [`Scalar`] (`f32` or `f64`); the
//! `*32`/`*64` aliases below pin the common instantiations. Grid files store
//! class indices as u16 and reals as f32, so `f32` pipelines round-trip
//! through files bit-exactly, while `f64` is preferred for in-memory
//! tolerance-critical work.

pub mod charset;
pub mod codec;
pub mod detect;
pub mod geometry;
pub mod grid;
pub mod metrics;
pub mod page;
mod scalar;
pub mod synth;
pub mod words;

pub use charset::Charset;
pub use geometry::{iou, overlap_fraction_of_smaller, Rect};
pub use grid::{ClassGrid, Grid};
pub use metrics::{match_words, wrr_corpus, wrr_document, CorpusReport, MatchResult};
pub use page::{GroundTruthPage, NetworkOutput, PageRecord, WordAnnotation};
pub use scalar::Scalar;
pub use words::{decode_page, DecodeOptions, DecodedPage, Word};

pub type Rect32 = geometry::Rect<f32>;
pub type Rect64 = geometry::Rect<f64>;
pub type WordAnnotation32 = page::WordAnnotation<f32>;
pub type WordAnnotation64 = page::WordAnnotation<f64>;
pub type GroundTruthPage32 = page::GroundTruthPage<f32>;
pub type GroundTruthPage64 = page::GroundTruthPage<f64>;
pub type NetworkOutput32 = page::NetworkOutput<f32>;
pub type NetworkOutput64 = page::NetworkOutput<f64>;
pub type CandidateBox32 = detect::CandidateBox<f32>;
pub type CandidateBox64 = detect::CandidateBox<f64>;
pub type CharBox32 = detect::CharBox<f32>;
pub type CharBox64 = detect::CharBox<f64>;
pub type Word32 = words::Word<f32>;
pub type Word64 = words::Word<f64>;
