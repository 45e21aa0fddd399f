//! Query-efficient black-box substitute training.
//!
//! Trains a local substitute classifier against a label-only oracle: candidate
//! queries are crafted with white-box attack methods near the substitute's
//! decision boundary, an active-learning selector (optionally fused with a
//! diversity criterion) decides which candidates are worth a query, and a
//! strict ledger accounts for every oracle call.
//!
//! The numeric core is generic over the scalar type; `*32`/`*64` aliases below
//! pin the two supported instantiations.

pub mod attacks;
pub mod data;
pub mod error;
pub mod metrics;
pub mod net;
pub mod num;
pub mod oracle;
pub mod pipeline;
pub mod selector;

pub use error::{Error, Result};
pub use num::Real;

pub type Network32 = net::Network<f32>;
pub type Network64 = net::Network<f64>;
pub type Oracle32 = oracle::Oracle<f32>;
pub type Oracle64 = oracle::Oracle<f64>;
pub type Dataset32 = data::Dataset<f32>;
pub type Dataset64 = data::Dataset<f64>;
pub type CandidatePool32 = attacks::CandidatePool<f32>;
pub type CandidatePool64 = attacks::CandidatePool<f64>;
