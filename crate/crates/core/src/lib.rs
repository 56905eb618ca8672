//! Mining HTTP error records out of CDN proxy logs.
//!
//! The pipeline is: [`ingest`] parses and filters log lines and partitions
//! error records by host, [`features`] encodes records and ranks fields by
//! relevance to the status code, [`cluster`] groups the records with K-means
//! or K-modes, and [`report`] turns a fitted model into per-cluster
//! summaries and charts. [`synth`] generates log corpora with planted
//! cluster structure for testing.

pub mod cluster;
pub mod features;
pub mod ingest;
pub mod log_model;
pub mod report;
pub mod seed;
pub mod synth;

pub use log_model::{classify_status, is_error, Field, LogRecord, StatusClass, MISSING};
