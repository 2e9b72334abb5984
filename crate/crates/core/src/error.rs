use std::path::PathBuf;

use thiserror::Error;

use crate::lifecycle::LifecycleState;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: cannot read config: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{location}: {message}")]
    Parse { location: String, message: String },
    #[error("invalid value for `{key}`{line}: {reason}")]
    Invalid {
        key: String,
        reason: String,
        /// Rendered as ` (line N)` when the key could be located in the source.
        line: String,
    },
}

impl ConfigError {
    pub fn invalid(key: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            key: key.into(),
            reason: reason.into(),
            line: String::new(),
        }
    }
}

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("{n_bs} base stations cannot be split evenly into {n_clusters} clusters")]
    UnevenClusters { n_bs: usize, n_clusters: usize },
    #[error("cluster count must be positive (got {0})")]
    NonPositiveClusters(usize),
    #[error("cluster count {k} exceeds number of points {n}")]
    TooManyClusters { k: usize, n: usize },
    #[error("level `{0}` must have at least one node")]
    EmptyLevel(&'static str),
}

#[derive(Debug, Error, PartialEq)]
pub enum LifecycleError {
    #[error("no legal path from {from:?} to {to:?}")]
    IllegalTransition {
        from: LifecycleState,
        to: LifecycleState,
    },
    #[error("instance is already transitioning to {0:?}")]
    InFlight(LifecycleState),
}

#[derive(Debug, Error, PartialEq)]
pub enum PlacementError {
    #[error("the static strategy plans only once, at t = 0 (requested at t = {0} s)")]
    StaticReplan(f64),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("{path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
