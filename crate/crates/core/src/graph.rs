//! Weighted bipartite signifier → signified graph.
//!
//! Node sets are derived from the edge map, so a node exists exactly when
//! it takes part in at least one edge. Pruning therefore never leaves
//! isolated nodes behind.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::term::Term;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("association count must be at least 1")]
    ZeroCount,
    #[error("schema_version mismatch: {left} vs {right}")]
    SchemaMismatch { left: u32, right: u32 },
    #[error("{context}: {message}")]
    Format { context: String, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl GraphError {
    fn format(context: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Format {
            context: context.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeGraph {
    schema_version: u32,
    adjacency: BTreeMap<Term, BTreeMap<Term, u64>>,
}

impl Default for KnowledgeGraph {
    fn default() -> Self {
        Self::new()
    }
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            adjacency: BTreeMap::new(),
        }
    }

    pub fn schema_version(&self) -> u32 {
        self.schema_version
    }

    /// Adds `count` occurrences of `head → tail`, creating the edge and its
    /// nodes if needed.
    pub fn add_association(&mut self, head: Term, tail: Term, count: u64) -> Result<(), GraphError> {
        if count == 0 {
            return Err(GraphError::ZeroCount);
        }
        *self.adjacency.entry(head).or_default().entry(tail).or_insert(0) += count;
        Ok(())
    }

    /// Union of both edge sets with shared weights summed.
    pub fn merge(&self, other: &KnowledgeGraph) -> Result<KnowledgeGraph, GraphError> {
        if self.schema_version != other.schema_version {
            return Err(GraphError::SchemaMismatch {
                left: self.schema_version,
                right: other.schema_version,
            });
        }
        let mut merged = self.clone();
        for (head, tail, weight) in other.edges() {
            merged.add_association(head.clone(), tail.clone(), weight)?;
        }
        Ok(merged)
    }

    /// Keeps only edges for which `keep(head, tail, weight)` holds.
    fn retain_edges(&self, mut keep: impl FnMut(&Term, &Term, u64) -> bool) -> KnowledgeGraph {
        let adjacency = self
            .adjacency
            .iter()
            .filter_map(|(head, tails)| {
                let kept: BTreeMap<Term, u64> = tails
                    .iter()
                    .filter(|(tail, &w)| keep(head, tail, w))
                    .map(|(t, &w)| (t.clone(), w))
                    .collect();
                (!kept.is_empty()).then(|| (head.clone(), kept))
            })
            .collect();
        KnowledgeGraph {
            schema_version: self.schema_version,
            adjacency,
        }
    }

    /// Drops every edge lighter than `min_weight`. A threshold of 0 or 1 is
    /// vacuous.
    pub fn prune_min_weight(&self, min_weight: u64) -> KnowledgeGraph {
        self.retain_edges(|_, _, w| w >= min_weight)
    }

    /// Keeps only edges whose head is in `vocabulary`.
    pub fn restrict_signifiers(&self, vocabulary: &BTreeSet<Term>) -> KnowledgeGraph {
        self.retain_edges(|head, _, _| vocabulary.contains(head))
    }

    /// Drops every edge whose tail is in `banned`.
    pub fn remove_signifieds(&self, banned: &BTreeSet<Term>) -> KnowledgeGraph {
        self.retain_edges(|_, tail, _| !banned.contains(tail))
    }

    /// Meanings of `signifier`, heaviest first, ties by tail text.
    pub fn query(&self, signifier: &Term) -> Vec<(Term, u64)> {
        let Some(tails) = self.adjacency.get(signifier) else {
            return Vec::new();
        };
        let mut ranked: Vec<(Term, u64)> = tails.iter().map(|(t, &w)| (t.clone(), w)).collect();
        // BTreeMap iteration is already tail-ordered; a stable sort keeps it for ties.
        ranked.sort_by_key(|&(_, weight)| std::cmp::Reverse(weight));
        ranked
    }

    pub fn weight(&self, head: &Term, tail: &Term) -> Option<u64> {
        self.adjacency.get(head)?.get(tail).copied()
    }

    /// Edges in (head, tail) lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (&Term, &Term, u64)> {
        self.adjacency
            .iter()
            .flat_map(|(h, tails)| tails.iter().map(move |(t, &w)| (h, t, w)))
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.values().map(BTreeMap::len).sum()
    }

    pub fn total_weight(&self) -> u64 {
        self.edges().map(|(_, _, w)| w).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn signifiers(&self) -> BTreeSet<&Term> {
        self.adjacency.keys().collect()
    }

    pub fn signifieds(&self) -> BTreeSet<&Term> {
        self.adjacency.values().flat_map(BTreeMap::keys).collect()
    }

    /// Checks the structural invariants. Every operation preserves them;
    /// this exists for tests and for loaded files.
    pub fn validate(&self) -> Result<(), GraphError> {
        for (head, tails) in &self.adjacency {
            if tails.is_empty() {
                return Err(GraphError::format(format!("signifier {head:?}"), "isolated node"));
            }
            if let Some((tail, _)) = tails.iter().find(|(_, &w)| w == 0) {
                return Err(GraphError::format(
                    format!("edge {head:?} -> {tail:?}"),
                    "weight must be at least 1",
                ));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let file = GraphFile {
            schema_version: self.schema_version,
            signifiers: self.signifiers().into_iter().map(|t| t.to_string()).collect(),
            signifieds: self.signifieds().into_iter().map(|t| t.to_string()).collect(),
            edges: self
                .edges()
                .map(|(h, t, w)| EdgeRecord {
                    head: h.to_string(),
                    tail: t.to_string(),
                    weight: w,
                })
                .collect(),
        };
        let mut out = serde_json::to_string_pretty(&file).expect("graph serializes");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let file: GraphFile = serde_json::from_str(text)
            .map_err(|e| GraphError::format(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(GraphError::format(
                "schema_version",
                format!("unsupported version {}", file.schema_version),
            ));
        }
        let mut graph = KnowledgeGraph::new();
        for (i, edge) in file.edges.into_iter().enumerate() {
            let head =
                Term::new(edge.head).map_err(|e| GraphError::format(format!("edges[{i}].head"), e.to_string()))?;
            let tail =
                Term::new(edge.tail).map_err(|e| GraphError::format(format!("edges[{i}].tail"), e.to_string()))?;
            if edge.weight == 0 {
                return Err(GraphError::format(
                    format!("edges[{i}].weight"),
                    "weight must be at least 1",
                ));
            }
            if graph.weight(&head, &tail).is_some() {
                return Err(GraphError::format(
                    format!("edges[{i}]"),
                    format!("duplicate edge {head} -> {tail}"),
                ));
            }
            graph.add_association(head, tail, edge.weight)?;
        }
        check_node_list("signifiers", &file.signifiers, &graph.signifiers())?;
        check_node_list("signifieds", &file.signifieds, &graph.signifieds())?;
        Ok(graph)
    }

    /// Writes the canonical JSON form. Identical graphs give identical bytes.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GraphError> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|source| GraphError::Io {
            path: path.to_owned(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GraphError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| GraphError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_json(&text).map_err(|e| match e {
            GraphError::Format { context, message } => GraphError::Format {
                context: format!("{}: {context}", path.display()),
                message,
            },
            other => other,
        })
    }

    #[cfg(test)]
    pub(crate) fn with_schema_version(mut self, version: u32) -> Self {
        self.schema_version = version;
        self
    }
}

fn check_node_list(field: &str, listed: &[String], derived: &BTreeSet<&Term>) -> Result<(), GraphError> {
    let listed_set: BTreeSet<&str> = listed.iter().map(String::as_str).collect();
    if listed_set.len() != listed.len() {
        return Err(GraphError::format(field, "duplicate node"));
    }
    let derived_set: BTreeSet<&str> = derived.iter().map(|t| t.as_str()).collect();
    if let Some(extra) = listed_set.difference(&derived_set).next() {
        return Err(GraphError::format(field, format!("isolated node {extra:?}")));
    }
    if let Some(missing) = derived_set.difference(&listed_set).next() {
        return Err(GraphError::format(field, format!("missing node {missing:?}")));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    schema_version: u32,
    signifiers: Vec<String>,
    signifieds: Vec<String>,
    edges: Vec<EdgeRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeRecord {
    head: String,
    tail: String,
    weight: u64,
}
