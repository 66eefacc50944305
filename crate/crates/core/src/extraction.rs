//! Turns semantic-role frames and entity annotations into a pruned graph.
//!
//! Head rule: the normalized ARG0, or ARG1 when ARG0 is absent or empty.
//! Every other argument of the frame, modifiers included, becomes a tail.
//! The predicate is never a node.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::graph::KnowledgeGraph;
use crate::jsonl::{self, JsonlError};
use crate::term::Term;

const DETERMINERS: [&str; 3] = ["a", "an", "the"];

/// The raw text normalized to nothing.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("text {0:?} normalizes to an empty term")]
pub struct EmptyTerm(pub String);

/// Lowercases, strips surrounding punctuation, collapses whitespace and,
/// when `strip_determiners` is set, drops leading articles.
pub fn normalize(raw: &str, strip_determiners: bool) -> Result<Term, EmptyTerm> {
    let not_alnum = |c: char| !c.is_alphanumeric();
    let lowered = raw.to_lowercase();
    let mut tokens: VecDeque<&str> = lowered.split_whitespace().collect();
    while let Some(first) = tokens.front_mut() {
        *first = first.trim_start_matches(not_alnum);
        let determiner = strip_determiners && DETERMINERS.contains(&first.trim_end_matches(not_alnum));
        if first.is_empty() || determiner {
            tokens.pop_front();
        } else {
            break;
        }
    }
    while let Some(last) = tokens.back_mut() {
        *last = last.trim_end_matches(not_alnum);
        if last.is_empty() {
            tokens.pop_back();
        } else {
            break;
        }
    }
    Term::new(Vec::from(tokens).join(" ")).map_err(|_| EmptyTerm(raw.to_owned()))
}

/// An SRL role label: `ARG0`..`ARG9` or `ARGM-<SUFFIX>`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct RoleLabel(String);

impl RoleLabel {
    pub const ARG0: &'static str = "ARG0";
    pub const ARG1: &'static str = "ARG1";

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid role label {0:?}: expected ARG0-ARG9 or ARGM-<SUFFIX>")]
pub struct RoleLabelError(String);

impl FromStr for RoleLabel {
    type Err = RoleLabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let numbered = s.len() == 4 && s.starts_with("ARG") && s.as_bytes()[3].is_ascii_digit();
        let modifier = s.strip_prefix("ARGM-").is_some_and(|suffix| {
            !suffix.is_empty()
                && suffix
                    .chars()
                    .all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '-')
        });
        if numbered || modifier {
            Ok(Self(s.to_owned()))
        } else {
            Err(RoleLabelError(s.to_owned()))
        }
    }
}

impl TryFrom<String> for RoleLabel {
    type Error = RoleLabelError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<RoleLabel> for String {
    fn from(value: RoleLabel) -> Self {
        value.0
    }
}

impl fmt::Display for RoleLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One predicate with its labeled arguments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SrlFrame {
    pub doc_id: String,
    pub sentence_index: u64,
    pub predicate: String,
    /// Ordered by role label, which fixes tail order.
    pub args: BTreeMap<RoleLabel, String>,
}

impl SrlFrame {
    pub fn validate(&self) -> Result<(), String> {
        if self.args.is_empty() {
            return Err("args is empty".into());
        }
        if let Some((role, _)) = self.args.iter().find(|(_, text)| text.is_empty()) {
            return Err(format!("args.{role} is empty"));
        }
        Ok(())
    }
}

/// Closed entity label set; adapters map anything else onto `Other`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum NerLabel {
    Person,
    Org,
    Gpe,
    Loc,
    Other,
}

impl NerLabel {
    pub fn default_excluded() -> BTreeSet<NerLabel> {
        [NerLabel::Person, NerLabel::Org, NerLabel::Gpe, NerLabel::Loc].into()
    }
}

impl FromStr for NerLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_owned()))
            .map_err(|_| format!("unknown entity label {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NerAnnotation {
    pub doc_id: String,
    pub term: String,
    pub label: NerLabel,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractionConfig {
    pub min_weight: u64,
    pub excluded_entity_labels: BTreeSet<NerLabel>,
    /// `None` disables vocabulary pruning.
    pub vocabulary: Option<BTreeSet<Term>>,
    pub strip_determiners: bool,
    /// Head synonyms, e.g. `timepiece → watch`. Empty unless configured.
    pub aliases: BTreeMap<Term, Term>,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            min_weight: 2,
            excluded_entity_labels: NerLabel::default_excluded(),
            vocabulary: None,
            strip_determiners: true,
            aliases: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("min_weight must be at least 1")]
    MinWeight,
    #[error("vocabulary pruning is enabled but the vocabulary is empty")]
    EmptyVocabulary,
}

impl ExtractionConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.min_weight == 0 {
            return Err(ConfigError::MinWeight);
        }
        if self.vocabulary.as_ref().is_some_and(BTreeSet::is_empty) {
            return Err(ConfigError::EmptyVocabulary);
        }
        Ok(())
    }
}

/// Picks the head argument. Returns the role it came from alongside it.
pub fn head_of(frame: &SrlFrame, strip_determiners: bool) -> Option<(&RoleLabel, Term)> {
    [RoleLabel::ARG0, RoleLabel::ARG1].into_iter().find_map(|wanted| {
        let (role, text) = frame.args.iter().find(|(r, _)| r.as_str() == wanted)?;
        normalize(text, strip_determiners).ok().map(|term| (role, term))
    })
}

/// Every argument except `head_role`, normalized, in role-label order.
pub fn tails_of(frame: &SrlFrame, head_role: &RoleLabel, strip_determiners: bool) -> Vec<Term> {
    frame
        .args
        .iter()
        .filter(|(role, _)| *role != head_role)
        .filter_map(|(_, text)| normalize(text, strip_determiners).ok())
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameStats {
    pub frames_read: u64,
    pub frames_skipped: u64,
    pub pairs_emitted: u64,
}

/// Counts every (head, tail) occurrence across `frames`.
pub fn frames_to_graph(frames: &[SrlFrame], config: &ExtractionConfig) -> (KnowledgeGraph, FrameStats) {
    let mut graph = KnowledgeGraph::new();
    let mut stats = FrameStats::default();
    for frame in frames {
        stats.frames_read += 1;
        let Some((role, head)) = head_of(frame, config.strip_determiners) else {
            stats.frames_skipped += 1;
            continue;
        };
        let head = config.aliases.get(&head).cloned().unwrap_or(head);
        for tail in tails_of(frame, role, config.strip_determiners) {
            graph.add_association(head.clone(), tail, 1).expect("count is 1");
            stats.pairs_emitted += 1;
        }
    }
    (graph, stats)
}

/// Normalized terms of every annotation carrying an excluded label.
pub fn banned_terms(
    annotations: &[NerAnnotation],
    excluded: &BTreeSet<NerLabel>,
    strip_determiners: bool,
) -> BTreeSet<Term> {
    annotations
        .iter()
        .filter(|a| excluded.contains(&a.label))
        .filter_map(|a| normalize(&a.term, strip_determiners).ok())
        .collect()
}

/// Edge counts after each construction stage.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageEdges {
    pub built: usize,
    pub after_vocabulary: usize,
    pub after_entity_exclusion: usize,
    pub after_min_weight: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildStats {
    #[serde(flatten)]
    pub frames: FrameStats,
    pub banned_terms: usize,
    pub edges: StageEdges,
}

/// Counts pairs, then prunes by vocabulary, entity exclusion and finally
/// weight, in that order.
pub fn build_pruned_graph(
    frames: &[SrlFrame],
    annotations: &[NerAnnotation],
    config: &ExtractionConfig,
) -> Result<(KnowledgeGraph, BuildStats), ConfigError> {
    config.validate()?;
    let (built, frame_stats) = frames_to_graph(frames, config);
    let restricted = match &config.vocabulary {
        Some(vocabulary) => built.restrict_signifiers(vocabulary),
        None => built.clone(),
    };
    let banned = banned_terms(annotations, &config.excluded_entity_labels, config.strip_determiners);
    let without_entities = restricted.remove_signifieds(&banned);
    let pruned = without_entities.prune_min_weight(config.min_weight);
    let stats = BuildStats {
        frames: frame_stats,
        banned_terms: banned.len(),
        edges: StageEdges {
            built: built.edge_count(),
            after_vocabulary: restricted.edge_count(),
            after_entity_exclusion: without_entities.edge_count(),
            after_min_weight: pruned.edge_count(),
        },
    };
    Ok((pruned, stats))
}

pub fn read_frames(reader: impl BufRead) -> Result<Vec<SrlFrame>, JsonlError> {
    jsonl::read_validated(reader, |frame: &SrlFrame| frame.validate())
}

pub fn read_annotations(reader: impl BufRead) -> Result<Vec<NerAnnotation>, JsonlError> {
    jsonl::read_validated(reader, |a: &NerAnnotation| {
        if a.term.is_empty() {
            Err("term is empty".into())
        } else {
            Ok(())
        }
    })
}
