use std::io;
use std::path::PathBuf;

use fluency_core::folds::FoldError;
use fluency_core::head::HeadError;
use fluency_core::layers::LayerError;
use fluency_core::metrics::MetricError;
use fluency_core::probe::ProbeError;
use fluency_core::spans::SpanError;
use fluency_core::targets::TargetError;
use fluency_core::trainer::TrainError;
use thiserror::Error;

use crate::alignment::AlignmentError;
use crate::checkpoint::CheckpointError;
use crate::config::ConfigError;
use crate::features::FeatureError;
use crate::fleb::FlebError;
use crate::folds_file::FoldFileError;
use crate::manifest::ManifestError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("manifest: {0}")]
    Manifest(#[from] ManifestError),
    #[error("{}: {source}", path.display())]
    Embedding { path: PathBuf, source: FlebError },
    #[error("{}: {source}", path.display())]
    Alignment {
        path: PathBuf,
        source: AlignmentError,
    },
    #[error("recording {id}: {source}")]
    Spans { id: String, source: SpanError },
    #[error("{0}")]
    Dataset(String),
    #[error("{}: {source}", path.display())]
    Checkpoint {
        path: PathBuf,
        source: CheckpointError,
    },
    #[error("{}: {source}", path.display())]
    FoldFile {
        path: PathBuf,
        source: FoldFileError,
    },
    #[error("{}: {source}", path.display())]
    Features {
        path: PathBuf,
        source: FeatureError,
    },
    #[error(transparent)]
    Layer(#[from] LayerError),
    #[error(transparent)]
    Folds(#[from] FoldError),
    #[error(transparent)]
    Target(#[from] TargetError),
    #[error(transparent)]
    Head(#[from] HeadError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error("{}: {source}", path.display())]
    Output { path: PathBuf, source: io::Error },
}

impl Error {
    /// Process exit status. 2 is left to argument-parsing failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Usage(_) => 2,
            Error::Config(_) => 3,
            Error::Manifest(_) => 4,
            Error::Embedding { .. } => 5,
            Error::Alignment { .. } | Error::Spans { .. } => 6,
            Error::Dataset(_) => 7,
            Error::Checkpoint { .. } => 8,
            Error::FoldFile { .. } => 9,
            Error::Features { .. } => 10,
            Error::Layer(_) => 11,
            Error::Folds(_) => 12,
            Error::Target(_) => 13,
            Error::Head(_) => 14,
            Error::Train(_) => 15,
            Error::Metric(_) => 16,
            Error::Probe(_) => 17,
            Error::Output { .. } => 18,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
