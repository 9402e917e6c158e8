use std::fs;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::Serialize;

use super::CliError;

/// Writes run artifacts into one output directory.
///
/// CSV files start with a `# generated <utc>` line unless timestamps are
/// suppressed, in which case identical inputs give identical bytes.
#[derive(Debug)]
pub struct ArtifactWriter {
    dir: PathBuf,
    timestamp: Option<String>,
    written: Vec<PathBuf>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path, with_timestamp: bool) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| output_error(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            timestamp: with_timestamp.then(|| Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true)),
            written: Vec::new(),
        })
    }

    pub fn timestamp(&self) -> Option<&str> {
        self.timestamp.as_deref()
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Write a CSV whose body is produced by `body`.
    pub fn csv<F>(&mut self, name: &str, body: F) -> Result<PathBuf, CliError>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<(), csv::Error>,
    {
        let path = self.path(name);
        let mut buf = Vec::new();
        if let Some(ts) = &self.timestamp {
            buf.extend_from_slice(format!("# generated {ts}\n").as_bytes());
        }
        body(&mut buf).map_err(|e| output_error(&path, e))?;
        self.write(path, &buf)
    }

    /// Serialize `rows` as a CSV with a header taken from the row type.
    pub fn csv_rows<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<PathBuf, CliError> {
        self.csv(name, |buf| {
            let mut w = csv::Writer::from_writer(buf);
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
            Ok(())
        })
    }

    pub fn toml<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        let text = toml::to_string(value).map_err(|e| output_error(&path, e))?;
        self.write(path, text.as_bytes())
    }

    pub fn text(&mut self, name: &str, text: &str) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        self.write(path, text.as_bytes())
    }

    fn write(&mut self, path: PathBuf, bytes: &[u8]) -> Result<PathBuf, CliError> {
        fs::write(&path, bytes).map_err(|e| output_error(&path, e))?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn into_written(self) -> Vec<PathBuf> {
        self.written
    }
}

fn output_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Output {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}
