//! Normalized node labels.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize};

/// Error returned when a string does not satisfy the [`Term`] invariants.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TermError {
    #[error("term is empty")]
    Empty,
    #[error("term {0:?} contains uppercase characters")]
    Uppercase(String),
    #[error("term {0:?} has irregular whitespace")]
    Whitespace(String),
    #[error("term {0:?} starts or ends with punctuation")]
    SurroundingPunctuation(String),
}

/// A normalized phrase: lowercase, single-space separated, no surrounding
/// punctuation, never empty.
///
/// `Term::new` only validates. Raw text goes through
/// [`crate::extraction::normalize`] first.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct Term(String);

impl Term {
    pub fn new(text: impl Into<String>) -> Result<Self, TermError> {
        let text = text.into();
        validate(&text)?;
        Ok(Self(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Whitespace-separated tokens.
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.0.split(' ')
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

fn validate(text: &str) -> Result<(), TermError> {
    if text.is_empty() {
        return Err(TermError::Empty);
    }
    if text.chars().any(char::is_uppercase) {
        return Err(TermError::Uppercase(text.to_owned()));
    }
    let bad_space = text.starts_with(' ')
        || text.ends_with(' ')
        || text.contains("  ")
        || text.chars().any(|c| c != ' ' && (c.is_whitespace() || c.is_control()));
    if bad_space {
        return Err(TermError::Whitespace(text.to_owned()));
    }
    let first = text.chars().next().expect("non-empty");
    let last = text.chars().next_back().expect("non-empty");
    if !first.is_alphanumeric() || !last.is_alphanumeric() {
        return Err(TermError::SurroundingPunctuation(text.to_owned()));
    }
    Ok(())
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for Term {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl TryFrom<&str> for Term {
    type Error = TermError;

    fn try_from(value: &str) -> Result<Self, Self::Error> {
        Term::new(value)
    }
}

impl<'de> Deserialize<'de> for Term {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        Term::new(raw).map_err(serde::de::Error::custom)
    }
}
