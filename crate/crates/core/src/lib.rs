//! Hyperedge-memory temporal graph network.
//!
//! The crate covers the whole pipeline: event streams ([`graph`]), streaming
//! hyperedge construction ([`hyperedge`]), a synthetic hypergraph temporal
//! block model ([`htsbm`]), a small reverse-mode autodiff engine
//! ([`autodiff`]), the network itself ([`model`]), and training plus MRR
//! evaluation ([`train`]).
// `!(x >= 0.0)` is how NaN gets rejected throughout
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod cli;
pub mod config;
pub mod error;
pub mod graph;
pub mod htsbm;
pub mod hyperedge;
pub mod model;
pub mod train;

pub use error::{Error, Result};
