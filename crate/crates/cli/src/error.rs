use std::io;

use cdnerr::cluster::ClusterError;
use cdnerr::features::FeatureError;
use cdnerr::ingest::IngestError;
use cdnerr::report::ReportError;
use cdnerr::synth::SynthError;
use serde::Serialize;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config {path}: {message}")]
    Config { path: String, message: String },
    #[error("no parseable lines in the input ({lines} lines read, {rejected} rejected)")]
    NoParseableLines { lines: u64, rejected: u64 },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl CliError {
    pub fn io(path: &std::path::Path) -> impl Fn(io::Error) -> CliError + '_ {
        move |source| CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// 0 success, 1 usage or configuration, 2 unusable input, 3 clustering
    /// infeasible.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::NoParseableLines { .. } | CliError::Ingest(IngestError::Io { .. }) => EXIT_INPUT,
            CliError::Cluster(ClusterError::TooFewRows { .. }) => EXIT_INFEASIBLE,
            _ => EXIT_USAGE,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config { .. } => "config",
            CliError::NoParseableLines { .. } => "no_parseable_lines",
            CliError::Ingest(_) => "ingest",
            CliError::Feature(_) => "features",
            CliError::Cluster(ClusterError::TooFewRows { .. }) => "clustering_infeasible",
            CliError::Cluster(_) => "cluster",
            CliError::Report(_) => "report",
            CliError::Synth(_) => "synth",
            CliError::Io { .. } => "io",
            CliError::Json { .. } => "json",
        }
    }

    /// The single-line JSON document written to stderr.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Body<'a> {
            kind: &'a str,
            exit_code: i32,
            message: String,
        }
        #[derive(Serialize)]
        struct Doc<'a> {
            error: Body<'a>,
        }
        serde_json::to_string(&Doc {
            error: Body {
                kind: self.kind(),
                exit_code: self.exit_code(),
                message: self.to_string(),
            },
        })
        .expect("plain strings serialize")
    }
}
