//! Line-numbered JSON Lines reading.

use std::io::BufRead;

use serde::de::DeserializeOwned;

#[derive(Debug, thiserror::Error)]
pub enum JsonlError {
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl JsonlError {
    pub fn line(&self) -> Option<usize> {
        match self {
            Self::Schema { line, .. } => Some(*line),
            Self::Io(_) => None,
        }
    }
}

/// Parses every non-blank line as `T` and runs `check` on it. Stops at the
/// first failure.
pub fn read_validated<T, R, F>(reader: R, mut check: F) -> Result<Vec<T>, JsonlError>
where
    T: DeserializeOwned,
    R: BufRead,
    F: FnMut(&T) -> Result<(), String>,
{
    let mut items = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let number = index + 1;
        let item: T = serde_json::from_str(&line).map_err(|e| JsonlError::Schema {
            line: number,
            message: e.to_string(),
        })?;
        check(&item).map_err(|message| JsonlError::Schema { line: number, message })?;
        items.push(item);
    }
    Ok(items)
}
