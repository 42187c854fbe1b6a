//! Similar-cohort retrieval from histology patch features and
//! personalized survival modelling.
//!
//! - [`features`]: per-nucleus shape, intensity and texture features,
//!   stain normalization.
//! - [`index`]: exact weighted nearest-neighbour search with relevance
//!   feedback and rank fusion.
//! - [`survival`]: Kaplan-Meier, log-rank, Cox and lasso-Cox.
//! - [`ingest`]: CSV loading, factor encoding and report-text extraction.
//! - [`personalize`]: the end-to-end report and the cohort simulator.

pub mod config;
pub mod features;
pub mod index;
pub mod ingest;
pub mod personalize;
pub mod survival;
