//! Experiment engine for testing whether news-headline embeddings improve
//! next-day equity-return forecasts.
//!
//! The pipeline: load headline and market data ([`corpus`]), embed headlines
//! through a pluggable provider with a concurrent batched cache ([`embed`]),
//! reduce embeddings with PCA ([`pca`]), assemble windowed dataset variants
//! over three temporal transforms ([`features`]), train five neural
//! architectures from scratch ([`models`]), score them ([`metrics`]) and
//! orchestrate the full grid with resumable, per-run-seeded execution
//! ([`runner`]).
//!
//! See the `examples/` directory for one runnable example per capability,
//! and the `headline-forecast` binary for the `ingest`, `embed`, `grid` and
//! `report` subcommands.

pub mod commands;
pub mod config;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod features;
pub mod hash;
pub mod linalg;
pub mod metrics;
pub mod models;
pub mod pca;
pub mod runner;
pub mod synthetic;

pub use error::{Error, Result};
