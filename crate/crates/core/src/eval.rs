//! Exact / partial / semantic matching and precision-recall-F1 reporting.
//!
//! The modes are nested: a partial match includes every exact match and a
//! semantic match includes every partial one. Counts are micro-averaged.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io;
use std::ops::AddAssign;

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use crate::detection::DetectionSet;
use crate::embedding::EmbeddingTable;
use crate::extraction::normalize;
use crate::graph::KnowledgeGraph;
use crate::term::Term;

pub const DEFAULT_THRESHOLD: f64 = 0.7;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("semantic threshold {0} is outside (0, 1]")]
    Threshold(f64),
    #[error("semantic matching requires an embedding table")]
    MissingEmbeddings,
    #[error("gold pairings are empty")]
    NoGold,
    #[error("gold pairings are keyed by {found}, expected {expected}")]
    Keying { expected: KeyedBy, found: KeyedBy },
    #[error("no detections for gold image ids: {}", .0.join(", "))]
    MissingDetections(Vec<String>),
    #[error("gold file: {0}")]
    Gold(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MatchMode {
    Exact,
    Partial,
    Semantic { threshold: f64 },
}

impl MatchMode {
    pub fn semantic(threshold: f64) -> Result<Self, EvalError> {
        if threshold > 0.0 && threshold <= 1.0 {
            Ok(Self::Semantic { threshold })
        } else {
            Err(EvalError::Threshold(threshold))
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Exact => "exact",
            Self::Partial => "partial",
            Self::Semantic { .. } => "semantic",
        }
    }
}

impl fmt::Display for MatchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Semantic { threshold } => write!(f, "semantic@{threshold}"),
            other => f.write_str(other.name()),
        }
    }
}

/// Phrases that lacked an embedding during semantic matching.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MatchDiagnostics {
    pub missing_embeddings: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct Matcher<'a> {
    mode: MatchMode,
    embeddings: Option<&'a EmbeddingTable>,
}

impl<'a> Matcher<'a> {
    pub fn new(mode: MatchMode, embeddings: Option<&'a EmbeddingTable>) -> Result<Self, EvalError> {
        if let MatchMode::Semantic { threshold } = mode {
            if !(threshold > 0.0 && threshold <= 1.0) {
                return Err(EvalError::Threshold(threshold));
            }
            if embeddings.is_none() {
                return Err(EvalError::MissingEmbeddings);
            }
        }
        Ok(Self { mode, embeddings })
    }

    pub fn mode(&self) -> MatchMode {
        self.mode
    }

    pub fn is_match(&self, predicted: &Term, gold: &Term, diag: &mut MatchDiagnostics) -> bool {
        if predicted == gold {
            return true;
        }
        if self.mode == MatchMode::Exact {
            return false;
        }
        if is_contiguous_subsequence(predicted, gold) {
            return true;
        }
        let MatchMode::Semantic { threshold } = self.mode else {
            return false;
        };
        let table = self.embeddings.expect("checked in Matcher::new");
        match table.similarity(predicted.as_str(), gold.as_str()) {
            Some(similarity) => similarity >= threshold,
            None => {
                for phrase in [predicted, gold] {
                    if table.get(phrase.as_str()).is_none() {
                        diag.missing_embeddings.insert(phrase.to_string());
                    }
                }
                false
            }
        }
    }
}

/// True when the tokens of `needle` appear consecutively in `haystack`.
fn is_contiguous_subsequence(needle: &Term, haystack: &Term) -> bool {
    let needle: Vec<&str> = needle.tokens().collect();
    let haystack: Vec<&str> = haystack.tokens().collect();
    haystack.windows(needle.len()).any(|w| w == needle.as_slice())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl MetricCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, fp, fn_ }
    }
}

impl AddAssign for MetricCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.tp += rhs.tp;
        self.fp += rhs.fp;
        self.fn_ += rhs.fn_;
    }
}

impl std::iter::Sum for MetricCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |mut acc, c| {
            acc += c;
            acc
        })
    }
}

/// Each predicted item is a TP if it matches any gold item, otherwise a FP.
/// Each gold item matched by nothing is a FN.
pub fn classify(
    predicted: &BTreeSet<Term>,
    gold: &BTreeSet<Term>,
    matcher: &Matcher<'_>,
    diag: &mut MatchDiagnostics,
) -> MetricCounts {
    let mut gold_hit = vec![false; gold.len()];
    let mut counts = MetricCounts::default();
    for p in predicted {
        let mut any = false;
        for (g, hit) in gold.iter().zip(gold_hit.iter_mut()) {
            if matcher.is_match(p, g, diag) {
                any = true;
                *hit = true;
            }
        }
        if any {
            counts.tp += 1;
        } else {
            counts.fp += 1;
        }
    }
    counts.fn_ = gold_hit.iter().filter(|h| !**h).count() as u64;
    counts
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn precision_recall_f1(counts: MetricCounts) -> Scores {
    let precision = ratio(counts.tp, counts.tp + counts.fp);
    let recall = ratio(counts.tp, counts.tp + counts.fn_);
    Scores {
        precision,
        recall,
        f1: f1_score(precision, recall),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeyedBy {
    Object,
    Image,
}

impl fmt::Display for KeyedBy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Object => "object",
            Self::Image => "image",
        })
    }
}

/// Hand-extracted gold meanings per object or per image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldPairings {
    pub keyed_by: KeyedBy,
    pub entries: BTreeMap<String, BTreeSet<Term>>,
}

impl GoldPairings {
    /// Object keys and all meanings are normalized; image ids are kept as is.
    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            keyed_by: KeyedBy,
            #[serde(deserialize_with = "unique_entries")]
            entries: Vec<(String, Vec<String>)>,
        }

        let raw: Raw = serde_json::from_str(text).map_err(|e| EvalError::Gold(e.to_string()))?;
        let mut entries = BTreeMap::new();
        for (raw_key, meanings) in raw.entries {
            let key = match raw.keyed_by {
                KeyedBy::Object => normalize(&raw_key, true)
                    .map_err(|e| EvalError::Gold(e.to_string()))?
                    .into_string(),
                KeyedBy::Image if raw_key.is_empty() => return Err(EvalError::Gold("empty image id".into())),
                KeyedBy::Image => raw_key.clone(),
            };
            let set = meanings
                .iter()
                .map(|m| normalize(m, true).map_err(|e| EvalError::Gold(format!("entries.{raw_key}: {e}"))))
                .collect::<Result<BTreeSet<Term>, _>>()?;
            if set.is_empty() {
                return Err(EvalError::Gold(format!("entries.{raw_key}: no meanings")));
            }
            if entries.insert(key.clone(), set).is_some() {
                return Err(EvalError::Gold(format!("duplicate key {key:?}")));
            }
        }
        Ok(Self {
            keyed_by: raw.keyed_by,
            entries,
        })
    }

    pub fn meaning_count(&self) -> usize {
        self.entries.values().map(BTreeSet::len).sum()
    }
}

fn unique_entries<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<(String, Vec<String>)>, D::Error> {
    struct Entries;

    impl<'de> Visitor<'de> for Entries {
        type Value = Vec<(String, Vec<String>)>;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("a map from key to a list of meanings")
        }

        fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
            let mut out: Vec<(String, Vec<String>)> = Vec::new();
            while let Some((key, value)) = map.next_entry::<String, Vec<String>>()? {
                if out.iter().any(|(k, _)| *k == key) {
                    return Err(serde::de::Error::custom(format!("duplicate key {key:?}")));
                }
                out.push((key, value));
            }
            Ok(out)
        }
    }

    d.deserialize_map(Entries)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub mode: MatchMode,
    pub per_key: BTreeMap<String, MetricCounts>,
    pub aggregate: MetricCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub missing_embeddings: Vec<String>,
}

impl EvalReport {
    pub fn new(mode: MatchMode, per_key: BTreeMap<String, MetricCounts>, diag: MatchDiagnostics) -> Self {
        let aggregate: MetricCounts = per_key.values().copied().sum();
        let scores = precision_recall_f1(aggregate);
        Self {
            mode,
            per_key,
            aggregate,
            precision: scores.precision,
            recall: scores.recall,
            f1: scores.f1,
            missing_embeddings: diag.missing_embeddings.into_iter().collect(),
        }
    }

    /// Pretty JSON with sorted keys and six-decimal floats.
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes");
        let mut buf = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut buf, SixDecimals::default());
        value.serialize(&mut ser).expect("in-memory write");
        buf.push(b'\n');
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn summary(&self) -> String {
        format!("P={:.6} R={:.6} F1={:.6}", self.precision, self.recall, self.f1)
    }

    /// Checks internal consistency of a report read back from disk. Scores
    /// are compared at the precision they are written with.
    pub fn validate(&self) -> Result<(), String> {
        let sum: MetricCounts = self.per_key.values().copied().sum();
        if sum != self.aggregate {
            return Err(format!(
                "aggregate {:?} is not the sum of per_key {sum:?}",
                self.aggregate
            ));
        }
        let expected = precision_recall_f1(self.aggregate);
        for (name, stored, derived) in [
            ("precision", self.precision, expected.precision),
            ("recall", self.recall, expected.recall),
            ("f1", self.f1, expected.f1),
        ] {
            if (stored - derived).abs() > 5e-7 {
                return Err(format!("{name} {stored} does not follow from the counts ({derived})"));
            }
        }
        if self.missing_embeddings.windows(2).any(|w| w[0] >= w[1]) {
            return Err("missing_embeddings is not sorted and unique".into());
        }
        Ok(())
    }
}

/// Pretty-printer that writes every float with exactly six decimals.
#[derive(Default)]
struct SixDecimals(serde_json::ser::PrettyFormatter<'static>);

impl serde_json::ser::Formatter for SixDecimals {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.6}")
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Scores the graph's meanings for each gold object.
pub fn evaluate_kg(
    graph: &KnowledgeGraph,
    gold: &GoldPairings,
    matcher: &Matcher<'_>,
) -> Result<EvalReport, EvalError> {
    check_gold(gold, KeyedBy::Object)?;
    let mut diag = MatchDiagnostics::default();
    let per_key = gold
        .entries
        .iter()
        .map(|(key, meanings)| {
            let predicted = Term::new(key.as_str())
                .map(|object| predicted_meanings(graph, [object]))
                .unwrap_or_default();
            (key.clone(), classify(&predicted, meanings, matcher, &mut diag))
        })
        .collect();
    Ok(EvalReport::new(matcher.mode(), per_key, diag))
}

/// Scores each image: its predicted meanings are the union of the graph
/// meanings of every detected label at or above `confidence`.
pub fn evaluate_e2e(
    graph: &KnowledgeGraph,
    detections: &[DetectionSet],
    gold: &GoldPairings,
    matcher: &Matcher<'_>,
    confidence: f64,
) -> Result<EvalReport, EvalError> {
    check_gold(gold, KeyedBy::Image)?;
    let by_image: BTreeMap<&str, &DetectionSet> = detections.iter().map(|d| (d.image_id.as_str(), d)).collect();
    let missing: Vec<String> = gold
        .entries
        .keys()
        .filter(|id| !by_image.contains_key(id.as_str()))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(EvalError::MissingDetections(missing));
    }
    let mut diag = MatchDiagnostics::default();
    let per_key = gold
        .entries
        .iter()
        .map(|(image, meanings)| {
            let labels = by_image[image.as_str()].labels_above(confidence);
            let predicted = predicted_meanings(graph, labels);
            (image.clone(), classify(&predicted, meanings, matcher, &mut diag))
        })
        .collect();
    Ok(EvalReport::new(matcher.mode(), per_key, diag))
}

fn predicted_meanings(graph: &KnowledgeGraph, objects: impl IntoIterator<Item = Term>) -> BTreeSet<Term> {
    objects
        .into_iter()
        .flat_map(|o| graph.query(&o))
        .map(|(tail, _)| tail)
        .collect()
}

fn check_gold(gold: &GoldPairings, expected: KeyedBy) -> Result<(), EvalError> {
    if gold.keyed_by != expected {
        return Err(EvalError::Keying {
            expected,
            found: gold.keyed_by,
        });
    }
    if gold.entries.is_empty() {
        return Err(EvalError::NoGold);
    }
    Ok(())
}
