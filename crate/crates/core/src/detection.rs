//! Per-image object detections, as emitted by an upstream detector.

use std::collections::{BTreeSet, HashSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::extraction::normalize;
use crate::jsonl::{self, JsonlError};
use crate::term::Term;

pub const DEFAULT_CONFIDENCE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detection {
    pub label: String,
    pub score: f64,
    /// `[x, y, w, h]` in pixels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionSet {
    pub image_id: String,
    pub detections: Vec<Detection>,
}

impl DetectionSet {
    pub fn validate(&self) -> Result<(), String> {
        if self.image_id.is_empty() {
            return Err("image_id is empty".into());
        }
        for (i, d) in self.detections.iter().enumerate() {
            if normalize(&d.label, true).is_err() {
                return Err(format!("detections[{i}].label {:?} is empty", d.label));
            }
            if !(0.0..=1.0).contains(&d.score) {
                return Err(format!("detections[{i}].score {} outside [0, 1]", d.score));
            }
            if d.bbox.is_some_and(|b| b.iter().any(|x| !x.is_finite())) {
                return Err(format!("detections[{i}].bbox is not finite"));
            }
        }
        Ok(())
    }

    /// Normalized labels whose score reaches `confidence`.
    pub fn labels_above(&self, confidence: f64) -> BTreeSet<Term> {
        self.detections
            .iter()
            .filter(|d| d.score >= confidence)
            .filter_map(|d| normalize(&d.label, true).ok())
            .collect()
    }
}

/// Every distinct normalized label in `sets`, regardless of score.
pub fn distinct_labels(sets: &[DetectionSet]) -> BTreeSet<Term> {
    sets.iter()
        .flat_map(|s| &s.detections)
        .filter_map(|d| normalize(&d.label, true).ok())
        .collect()
}

pub fn read_detections(reader: impl BufRead) -> Result<Vec<DetectionSet>, JsonlError> {
    let mut seen = HashSet::new();
    jsonl::read_validated(reader, |set: &DetectionSet| {
        set.validate()?;
        if !seen.insert(set.image_id.clone()) {
            return Err(format!("duplicate image_id {:?}", set.image_id));
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_and_validates() {
        let input = concat!(
            r#"{"image_id":"claesz_1628","detections":[{"label":"Skull","score":0.93,"bbox":[10,20,30,40]},{"label":"book","score":0.41}]}"#,
            "\n",
            r#"{"image_id":"heem_1630","detections":[]}"#,
            "\n"
        );
        let sets = read_detections(input.as_bytes()).unwrap();
        assert_eq!(sets.len(), 2);
        let skull = Term::new("skull").unwrap();
        assert_eq!(sets[0].labels_above(0.5), [skull.clone()].into());
        assert_eq!(sets[0].labels_above(0.41).len(), 2);
        assert!(sets[1].labels_above(0.0).is_empty());
        assert_eq!(distinct_labels(&sets).len(), 2);
    }

    #[test]
    fn rejects_bad_lines() {
        let score = r#"{"image_id":"a","detections":[{"label":"skull","score":1.5}]}"#;
        assert_eq!(read_detections(score.as_bytes()).unwrap_err().line(), Some(1));
        let label = r#"{"image_id":"a","detections":[{"label":"  ","score":0.5}]}"#;
        assert!(read_detections(label.as_bytes()).is_err());
        let dup = "{\"image_id\":\"a\",\"detections\":[]}\n{\"image_id\":\"a\",\"detections\":[]}\n";
        let err = read_detections(dup.as_bytes()).unwrap_err();
        assert_eq!(err.line(), Some(2));
        assert!(err.to_string().contains("duplicate"));
    }
}
