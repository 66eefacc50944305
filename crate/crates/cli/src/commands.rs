use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use semiokg::corpus::{cache_key, parse_line_list, split_corpus, Fetcher, ManifestEntry, Split, WebDocument};
use semiokg::detection::{distinct_labels, read_detections, DetectionSet};
use semiokg::embedding::EmbeddingTable;
use semiokg::eval::{evaluate_e2e, evaluate_kg, EvalReport, GoldPairings, KeyedBy, MatchMode, Matcher};
use semiokg::extraction::{build_pruned_graph, read_annotations, read_frames};
use semiokg::{KnowledgeGraph, Term};
use serde::Serialize;

use crate::config::{ModeName, PipelineConfig};

/// Exit code for a batch where some items failed.
pub const PARTIAL_FAILURE: u8 = 2;

fn reader(path: &Path) -> Result<BufReader<File>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(file))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn pretty_json(value: &impl Serialize) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    text
}

fn load_detections(path: &Path) -> Result<Vec<DetectionSet>> {
    read_detections(reader(path)?).with_context(|| format!("detections {}", path.display()))
}

fn load_gold(path: &Path) -> Result<GoldPairings> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    GoldPairings::from_json(&text).with_context(|| format!("gold {}", path.display()))
}

fn load_embeddings(path: &Path) -> Result<EmbeddingTable> {
    EmbeddingTable::read_jsonl(reader(path)?).with_context(|| format!("embeddings {}", path.display()))
}

pub fn build_graph(config: &PipelineConfig, json: bool) -> Result<ExitCode> {
    let frames_path = config.input("frames", &config.paths.frames)?;
    let ner_path = config.input("ner", &config.paths.ner)?;
    let frames = read_frames(reader(&frames_path)?).with_context(|| format!("frames {}", frames_path.display()))?;
    let annotations = read_annotations(reader(&ner_path)?).with_context(|| format!("ner {}", ner_path.display()))?;
    let detected = match (&config.extraction.vocabulary, &config.paths.detections) {
        (None, Some(_)) => {
            let path = config.input("detections", &config.paths.detections)?;
            Some(distinct_labels(&load_detections(&path)?))
        }
        _ => None,
    };
    let extraction = config.extraction_config(detected)?;
    if frames.is_empty() {
        eprintln!(
            "warning: {} contains no frames; the graph is empty",
            frames_path.display()
        );
    }
    let (graph, stats) = build_pruned_graph(&frames, &annotations, &extraction)?;
    let graph_path = config.output_dir().join("graph.json");
    write(&graph_path, &graph.to_json())?;
    let stats_json = pretty_json(&stats);
    write(&config.output_dir().join("graph.stats.json"), &stats_json)?;
    if json {
        print!("{stats_json}");
    } else {
        println!(
            "{} frames ({} skipped), {} edges kept of {}; wrote {}",
            stats.frames.frames_read,
            stats.frames.frames_skipped,
            stats.edges.after_min_weight,
            stats.edges.built,
            graph_path.display()
        );
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct Ranked<'a> {
    signified: &'a str,
    weight: u64,
}

pub fn query(config: &PipelineConfig, graph: Option<&Path>, term: &str, json: bool) -> Result<ExitCode> {
    let path = graph.unwrap_or(config.graph_path());
    let graph = KnowledgeGraph::load(path)?;
    let ranked = match semiokg::extraction::normalize(term, config.extraction.strip_determiners) {
        Ok(term) => graph.query(&term),
        Err(_) => Vec::new(),
    };
    if json {
        let rows: Vec<Ranked> = ranked
            .iter()
            .map(|(t, w)| Ranked {
                signified: t.as_str(),
                weight: *w,
            })
            .collect();
        println!("{}", serde_json::to_string(&rows).expect("serializable"));
    } else {
        for (signified, weight) in &ranked {
            println!("{signified} {weight}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Clone, Copy)]
pub enum Target {
    Kg,
    E2e,
}

impl Target {
    fn name(self) -> &'static str {
        match self {
            Target::Kg => "kg",
            Target::E2e => "e2e",
        }
    }
}

pub fn eval(config: &PipelineConfig, target: Target, mode: Option<ModeName>, json: bool) -> Result<ExitCode> {
    let mode = config.match_mode(mode.unwrap_or(config.matching.mode))?;
    let graph = KnowledgeGraph::load(config.graph_path())?;
    let embeddings = match mode {
        MatchMode::Semantic { .. } => {
            let path = config
                .input("embeddings", &config.paths.embeddings)
                .context("semantic matching needs embeddings")?;
            Some(load_embeddings(&path)?)
        }
        _ => None,
    };
    let matcher = Matcher::new(mode, embeddings.as_ref())?;
    let report = match target {
        Target::Kg => {
            let gold = load_gold(&config.input("gold_kg", &config.paths.gold_kg)?)?;
            evaluate_kg(&graph, &gold, &matcher)?
        }
        Target::E2e => {
            let gold = load_gold(&config.input("gold_e2e", &config.paths.gold_e2e)?)?;
            let detections = load_detections(&config.input("detections", &config.paths.detections)?)?;
            evaluate_e2e(&graph, &detections, &gold, &matcher, config.matching.confidence)?
        }
    };
    let report_json = report.to_json();
    let path = config
        .output_dir()
        .join(format!("report.{}.{}.json", target.name(), mode.name()));
    write(&path, &report_json)?;
    if !report.missing_embeddings.is_empty() {
        eprintln!(
            "warning: no embedding for {} phrase(s), matched without similarity: {}",
            report.missing_embeddings.len(),
            report.missing_embeddings.join(", ")
        );
    }
    if json {
        print!("{report_json}");
    } else {
        println!("{}", report.summary());
    }
    Ok(ExitCode::SUCCESS)
}

fn corpus_dir(config: &PipelineConfig) -> std::path::PathBuf {
    config.output_dir().join("corpus")
}

fn text_file(url: &str) -> String {
    cache_key(url).replace(".html", ".txt")
}

pub fn fetch_corpus(config: &PipelineConfig, json: bool) -> Result<ExitCode> {
    let urls_path = config.input("urls", &config.paths.urls)?;
    let text = fs::read_to_string(&urls_path).with_context(|| format!("reading {}", urls_path.display()))?;
    let urls = parse_line_list(&text);
    if urls.is_empty() {
        bail!("{} lists no urls", urls_path.display());
    }
    let fetcher = Fetcher::new(config.fetch_config())?;
    let dir = corpus_dir(config);
    let mut manifest = Vec::new();
    let mut failures = Vec::new();
    let mut seen = BTreeSet::new();
    for (url, result) in urls.iter().zip(fetcher.fetch_all(&urls)) {
        match result {
            Ok(doc) => {
                if !seen.insert(url.clone()) {
                    continue;
                }
                let entry = ManifestEntry {
                    url: url.clone(),
                    cache_file: cache_key(url),
                    text_file: text_file(url),
                    split: None,
                };
                write(&dir.join(&entry.text_file), &doc.text)?;
                manifest.push(entry);
            }
            Err(e) => failures.push(e.to_string()),
        }
    }
    write(&dir.join("manifest.json"), &pretty_json(&manifest))?;
    for failure in &failures {
        eprintln!("failed: {failure}");
    }
    if json {
        println!(
            "{}",
            serde_json::json!({"fetched": manifest.len(), "failed": failures, "requests": fetcher.request_count()})
        );
    } else {
        println!(
            "{} fetched, {} failed, {} network requests",
            manifest.len(),
            failures.len(),
            fetcher.request_count()
        );
    }
    Ok(if failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(PARTIAL_FAILURE)
    })
}

#[derive(Serialize)]
struct SplitFile<'a> {
    train: Vec<&'a str>,
    test: Vec<TestPage<'a>>,
}

#[derive(Serialize)]
struct TestPage<'a> {
    url: &'a str,
    references: &'a BTreeSet<String>,
}

pub fn split(config: &PipelineConfig, json: bool) -> Result<ExitCode> {
    let refs_path = config.input("test_refs", &config.paths.test_refs)?;
    let refs =
        parse_line_list(&fs::read_to_string(&refs_path).with_context(|| format!("reading {}", refs_path.display()))?);
    let dir = corpus_dir(config);
    let manifest_path = dir.join("manifest.json");
    let manifest_text = fs::read_to_string(&manifest_path)
        .with_context(|| format!("reading {}; run fetch-corpus first", manifest_path.display()))?;
    let mut manifest: Vec<ManifestEntry> =
        serde_json::from_str(&manifest_text).with_context(|| format!("parsing {}", manifest_path.display()))?;
    let fetcher = Fetcher::new(config.fetch_config())?;
    let docs = manifest
        .iter()
        .map(|entry| {
            let cached = fetcher
                .cache_entry(&entry.url)
                .with_context(|| format!("{} is not cached; run fetch-corpus first", entry.url))?;
            let path = fetcher.cache_dir().join(&cached.file);
            let html = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
            Ok(WebDocument::from_html(entry.url.clone(), html, cached.fetched_at))
        })
        .collect::<Result<Vec<_>>>()?;
    let split = split_corpus(docs, &refs)?;
    let test_urls: BTreeSet<&str> = split.test.iter().map(|d| d.url.as_str()).collect();
    for entry in &mut manifest {
        entry.split = Some(if test_urls.contains(entry.url.as_str()) {
            Split::Test
        } else {
            Split::Train
        });
    }
    write(&manifest_path, &pretty_json(&manifest))?;
    let file = SplitFile {
        train: split.train.iter().map(|d| d.url.as_str()).collect(),
        test: split
            .test
            .iter()
            .map(|d| TestPage {
                url: &d.url,
                references: &d.referenced_works,
            })
            .collect(),
    };
    let split_json = pretty_json(&file);
    write(&dir.join("split.json"), &split_json)?;
    if json {
        print!("{split_json}");
    } else {
        println!("train={} test={}", split.train.len(), split.test.len());
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum Kind {
    Frames,
    Ner,
    Detections,
    Embeddings,
    Gold,
    Graph,
    Report,
}

/// Checks `file` against the schema of `kind` and reports the record count.
pub fn validate(kind: Kind, file: &Path, json: bool) -> Result<ExitCode> {
    let context = || format!("{}", file.display());
    let records = match kind {
        Kind::Frames => read_frames(reader(file)?).with_context(context)?.len(),
        Kind::Ner => read_annotations(reader(file)?).with_context(context)?.len(),
        Kind::Detections => load_detections(file)?.len(),
        Kind::Embeddings => load_embeddings(file)?.len(),
        Kind::Gold => {
            let gold = load_gold(file)?;
            if gold.keyed_by == KeyedBy::Object {
                for key in gold.entries.keys() {
                    Term::new(key.as_str()).with_context(|| format!("{}: object key {key:?}", context()))?;
                }
            }
            gold.entries.len()
        }
        Kind::Graph => KnowledgeGraph::load(file)?.edge_count(),
        Kind::Report => {
            let text = fs::read_to_string(file).with_context(|| format!("reading {}", context()))?;
            let report: EvalReport = serde_json::from_str(&text).with_context(context)?;
            report.validate().map_err(|e| anyhow::anyhow!("{}: {e}", context()))?;
            report.per_key.len()
        }
    };
    if json {
        println!(
            "{}",
            serde_json::json!({"file": file.display().to_string(), "records": records, "valid": true})
        );
    } else {
        println!("{}: valid, {records} record(s)", file.display());
    }
    Ok(ExitCode::SUCCESS)
}
