//! File formats, experiment pipelines and the command line around
//! [`ttp_core`].

pub mod checkpoint;
pub mod config;
pub mod experiment;
pub mod idx;
pub mod records;

use std::path::Path;

/// Malformed input file.
#[derive(Debug, thiserror::Error)]
#[error("{}{}: {message}", file.as_deref().map(|f| format!("{f}: ")).unwrap_or_default(), offset.map(|o| format!("byte {o}")).unwrap_or_else(|| "format".into()))]
pub struct FormatError {
    pub file: Option<String>,
    pub offset: Option<usize>,
    pub message: String,
}

impl FormatError {
    pub fn at(offset: usize, message: String) -> Self {
        FormatError {
            file: None,
            offset: Some(offset),
            message,
        }
    }

    pub fn msg(message: impl Into<String>) -> Self {
        FormatError {
            file: None,
            offset: None,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        FormatError {
            file: Some(path.display().to_string()),
            offset: None,
            message: e.to_string(),
        }
    }

    pub fn in_file(mut self, path: &Path) -> Self {
        self.file = Some(path.display().to_string());
        self
    }
}
