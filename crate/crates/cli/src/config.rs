//! TOML pipeline configuration and its command-line overrides.
//!
//! Relative paths in the file resolve against the file's directory; paths
//! given on the command line resolve against the working directory.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, ensure, Context, Result};
use semiokg::corpus::FetchConfig;
use semiokg::eval::MatchMode;
use semiokg::extraction::{normalize, ExtractionConfig, NerLabel};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    Exact,
    Partial,
    Semantic,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frames: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ner: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detections: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gold_kg: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gold_e2e: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub urls: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_refs: Option<PathBuf>,
    /// Defaults to `<output_dir>/cache`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    /// Defaults to `out`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Graph read by `query` and the evaluations. Defaults to `<output_dir>/graph.json`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graph: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Extraction {
    pub min_weight: u64,
    pub excluded_entity_labels: Vec<NerLabel>,
    /// Overrides the detection labels as the signifier vocabulary.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vocabulary: Option<Vec<String>>,
    pub strip_determiners: bool,
    pub aliases: BTreeMap<String, String>,
}

impl Default for Extraction {
    fn default() -> Self {
        Self {
            min_weight: 2,
            excluded_entity_labels: NerLabel::default_excluded().into_iter().collect(),
            vocabulary: None,
            strip_determiners: true,
            aliases: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Matching {
    pub mode: ModeName,
    pub threshold: f64,
    pub confidence: f64,
}

impl Default for Matching {
    fn default() -> Self {
        Self {
            mode: ModeName::Exact,
            threshold: semiokg::eval::DEFAULT_THRESHOLD,
            confidence: semiokg::detection::DEFAULT_CONFIDENCE,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fetch {
    pub delay_ms: u64,
    pub parallelism: usize,
    pub timeout_secs: u64,
    pub force_refetch: bool,
}

impl Default for Fetch {
    fn default() -> Self {
        Self {
            delay_ms: 1000,
            parallelism: 4,
            timeout_secs: 30,
            force_refetch: false,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub extraction: Extraction,
    pub matching: Matching,
    pub fetch: Fetch,
}

/// Values given on the command line. They win over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub force_refetch: bool,
    pub min_weight: Option<u64>,
    pub threshold: Option<f64>,
    pub confidence: Option<f64>,
}

impl PipelineConfig {
    /// Reads `path` (or starts from defaults), applies `overrides` and
    /// resolves every path.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let cwd = std::env::current_dir().context("reading the working directory")?;
        let (mut config, base) = match path {
            Some(path) => {
                let text =
                    std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
                let config: PipelineConfig =
                    toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
                let base = path.parent().map(|p| cwd.join(p)).unwrap_or_else(|| cwd.clone());
                (config, base)
            }
            None => (PipelineConfig::default(), cwd.clone()),
        };
        config.paths.resolve(&base);
        if let Some(dir) = &overrides.output_dir {
            config.paths.output_dir = Some(cwd.join(dir));
        }
        let out = config.paths.output_dir.get_or_insert_with(|| base.join("out")).clone();
        config.paths.cache_dir.get_or_insert_with(|| out.join("cache"));
        config.paths.graph.get_or_insert_with(|| out.join("graph.json"));
        config.fetch.force_refetch |= overrides.force_refetch;
        if let Some(v) = overrides.min_weight {
            config.extraction.min_weight = v;
        }
        if let Some(v) = overrides.threshold {
            config.matching.threshold = v;
        }
        if let Some(v) = overrides.confidence {
            config.matching.confidence = v;
        }
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        ensure!(
            self.extraction.min_weight >= 1,
            "extraction.min_weight must be at least 1"
        );
        MatchMode::semantic(self.matching.threshold).context("matching.threshold")?;
        ensure!(
            (0.0..=1.0).contains(&self.matching.confidence),
            "matching.confidence {} is outside [0, 1]",
            self.matching.confidence
        );
        ensure!(self.fetch.parallelism >= 1, "fetch.parallelism must be at least 1");
        ensure!(self.fetch.timeout_secs >= 1, "fetch.timeout_secs must be at least 1");
        Ok(())
    }

    pub fn output_dir(&self) -> &Path {
        self.paths.output_dir.as_deref().expect("resolved in load")
    }

    pub fn graph_path(&self) -> &Path {
        self.paths.graph.as_deref().expect("resolved in load")
    }

    /// The configured input file `name`, which must exist.
    pub fn input(&self, name: &str, value: &Option<PathBuf>) -> Result<PathBuf> {
        let Some(path) = value else {
            bail!("paths.{name} is not configured");
        };
        ensure!(path.is_file(), "paths.{name}: {} does not exist", path.display());
        Ok(path.clone())
    }

    pub fn match_mode(&self, name: ModeName) -> Result<MatchMode> {
        Ok(match name {
            ModeName::Exact => MatchMode::Exact,
            ModeName::Partial => MatchMode::Partial,
            ModeName::Semantic => MatchMode::semantic(self.matching.threshold)?,
        })
    }

    /// Extraction settings. `detected_labels` supplies the vocabulary when
    /// the file lists none.
    pub fn extraction_config(&self, detected_labels: Option<BTreeSet<semiokg::Term>>) -> Result<ExtractionConfig> {
        let e = &self.extraction;
        let term = |raw: &str, what: &str| {
            normalize(raw, e.strip_determiners)
                .with_context(|| format!("extraction.{what}: {raw:?} is empty after normalization"))
        };
        let vocabulary = match (&e.vocabulary, detected_labels) {
            (Some(list), _) => list
                .iter()
                .map(|v| term(v, "vocabulary"))
                .collect::<Result<BTreeSet<_>>>()?,
            (None, Some(labels)) => labels,
            (None, None) => bail!("no vocabulary: set extraction.vocabulary or paths.detections"),
        };
        let aliases = e
            .aliases
            .iter()
            .map(|(from, to)| Ok((term(from, "aliases")?, term(to, "aliases")?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let config = ExtractionConfig {
            min_weight: e.min_weight,
            excluded_entity_labels: e.excluded_entity_labels.iter().copied().collect(),
            vocabulary: Some(vocabulary),
            strip_determiners: e.strip_determiners,
            aliases,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn fetch_config(&self) -> FetchConfig {
        let mut config = FetchConfig::new(self.paths.cache_dir.clone().expect("resolved in load"));
        config.host_delay = Duration::from_millis(self.fetch.delay_ms);
        config.parallelism = self.fetch.parallelism;
        config.timeout = Duration::from_secs(self.fetch.timeout_secs);
        config.force_refetch = self.fetch.force_refetch;
        config
    }
}

impl Paths {
    fn resolve(&mut self, base: &Path) {
        for path in [
            &mut self.frames,
            &mut self.ner,
            &mut self.embeddings,
            &mut self.detections,
            &mut self.gold_kg,
            &mut self.gold_e2e,
            &mut self.urls,
            &mut self.test_refs,
            &mut self.cache_dir,
            &mut self.output_dir,
            &mut self.graph,
        ]
        .into_iter()
        .flatten()
        {
            *path = base.join(&*path);
        }
    }
}
