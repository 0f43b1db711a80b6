//! Functional motif discovery in sets of misaligned, possibly gappy curves.
//!
//! The crate is organised as a pipeline:
//!
//! * [`curveset`] loads and preprocesses sampled curves,
//! * [`dissimilarity`] scores curve windows against centers,
//! * [`probkma`] clusters curve portions with local shift alignment,
//! * [`silhouette`] measures cluster quality on aligned portions,
//! * [`discovery`] runs many clusterings, prunes, merges and searches motifs,
//! * [`simgen`] simulates B-spline curves with planted motifs,
//! * [`cli`] exposes the pipeline as the `funmotif` command.

pub mod cli;
pub mod curveset;
pub mod discovery;
pub mod dissimilarity;
pub mod error;
pub mod probkma;
pub mod silhouette;
pub mod simgen;
pub mod stats;

pub use error::{Error, Result};
