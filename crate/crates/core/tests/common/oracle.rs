//! Brute-force reference implementations used to check the library.
//!
//! These deliberately avoid the library's graph and pruning code: frames are
//! read as untyped JSON, pairs are counted by linear scan and the graph file
//! is written by hand. Only term normalization is shared.

#![allow(dead_code)]

use semiokg::extraction::normalize;
use serde_json::Value;

pub type Edge = (String, String, u64);

fn norm(raw: &str) -> Option<String> {
    normalize(raw, true).ok().map(|t| t.into_string())
}

/// Head/tail pair counting over a frames JSONL document.
pub fn count_pairs(frames_jsonl: &str) -> Vec<Edge> {
    let mut edges: Vec<Edge> = Vec::new();
    for line in frames_jsonl.lines().filter(|l| !l.trim().is_empty()) {
        let frame: Value = serde_json::from_str(line).unwrap();
        let args = frame["args"].as_object().unwrap();
        let mut head = None;
        for role in ["ARG0", "ARG1"] {
            if let Some(h) = args.get(role).and_then(Value::as_str).and_then(norm) {
                head = Some((role, h));
                break;
            }
        }
        let Some((head_role, head)) = head else { continue };
        for (role, text) in args {
            if role == head_role {
                continue;
            }
            let Some(tail) = norm(text.as_str().unwrap()) else {
                continue;
            };
            match edges.iter_mut().find(|(h, t, _)| *h == head && *t == tail) {
                Some(edge) => edge.2 += 1,
                None => edges.push((head.clone(), tail, 1)),
            }
        }
    }
    edges
}

/// Terms of annotations whose label is in `excluded`.
pub fn banned(ner_jsonl: &str, excluded: &[&str]) -> Vec<String> {
    ner_jsonl
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str::<Value>(l).unwrap())
        .filter(|a| excluded.contains(&a["label"].as_str().unwrap()))
        .filter_map(|a| norm(a["term"].as_str().unwrap()))
        .collect()
}

pub fn filter(edges: Vec<Edge>, vocabulary: &[String], banned: &[String], min_weight: u64) -> Vec<Edge> {
    let mut kept: Vec<Edge> = edges
        .into_iter()
        .filter(|(h, t, w)| vocabulary.contains(h) && !banned.contains(t) && *w >= min_weight)
        .collect();
    kept.sort();
    kept
}

fn string_array(items: &[String], out: &mut String) {
    if items.is_empty() {
        out.push_str("[]");
        return;
    }
    out.push_str("[\n");
    let lines: Vec<String> = items
        .iter()
        .map(|s| format!("    {}", serde_json::to_string(s).unwrap()))
        .collect();
    out.push_str(&lines.join(",\n"));
    out.push_str("\n  ]");
}

/// The canonical graph file for `edges`, written by hand.
pub fn graph_json(edges: &[Edge]) -> String {
    let mut heads: Vec<String> = edges.iter().map(|e| e.0.clone()).collect();
    heads.sort();
    heads.dedup();
    let mut tails: Vec<String> = edges.iter().map(|e| e.1.clone()).collect();
    tails.sort();
    tails.dedup();
    let mut sorted = edges.to_vec();
    sorted.sort();

    let mut out = String::from("{\n  \"schema_version\": 1,\n  \"signifiers\": ");
    string_array(&heads, &mut out);
    out.push_str(",\n  \"signifieds\": ");
    string_array(&tails, &mut out);
    out.push_str(",\n  \"edges\": ");
    if sorted.is_empty() {
        out.push_str("[]");
    } else {
        let items: Vec<String> = sorted
            .iter()
            .map(|(h, t, w)| {
                format!(
                    "    {{\n      \"head\": {},\n      \"tail\": {},\n      \"weight\": {w}\n    }}",
                    serde_json::to_string(h).unwrap(),
                    serde_json::to_string(t).unwrap()
                )
            })
            .collect();
        out.push_str("[\n");
        out.push_str(&items.join(",\n"));
        out.push_str("\n  ]");
    }
    out.push_str("\n}\n");
    out
}

/// Distinct normalized detection labels in a detections JSONL document.
pub fn detection_labels(detections_jsonl: &str) -> Vec<String> {
    let mut labels: Vec<String> = detections_jsonl
        .lines()
        .filter(|l| !l.trim().is_empty())
        .flat_map(|l| {
            let v: Value = serde_json::from_str(l).unwrap();
            v["detections"]
                .as_array()
                .unwrap()
                .iter()
                .filter_map(|d| norm(d["label"].as_str().unwrap()))
                .collect::<Vec<_>>()
        })
        .collect();
    labels.sort();
    labels.dedup();
    labels
}

/// Counts for one key by enumerating every predicted × gold pair.
/// `matches(p, g)` decides a single pair.
pub fn enumerate_counts(
    predicted: &[String],
    gold: &[String],
    matches: impl Fn(&str, &str) -> bool,
) -> (u64, u64, u64) {
    let mut tp = 0;
    let mut fp = 0;
    for p in predicted {
        if gold.iter().any(|g| matches(p, g)) {
            tp += 1;
        } else {
            fp += 1;
        }
    }
    let fn_ = gold.iter().filter(|g| !predicted.iter().any(|p| matches(p, g))).count() as u64;
    (tp, fp, fn_)
}

/// Token-window containment, written independently of the library.
pub fn token_subsequence(needle: &str, haystack: &str) -> bool {
    let n: Vec<&str> = needle.split(' ').collect();
    let h: Vec<&str> = haystack.split(' ').collect();
    if n.len() > h.len() {
        return false;
    }
    (0..=h.len() - n.len()).any(|start| (0..n.len()).all(|k| h[start + k] == n[k]))
}

pub fn fixtures_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixtures_dir().join(name)).unwrap()
}
