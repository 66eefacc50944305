//! Web corpus acquisition: cached fetching, text extraction and the
//! train/test split by artwork references.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use scraper::{Html, Node};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

const INDEX_FILE: &str = "index.json";

#[derive(Debug, thiserror::Error)]
pub enum FetchError {
    #[error("{url}: invalid url: {reason}")]
    InvalidUrl { url: String, reason: String },
    #[error("{url}: HTTP status {status}")]
    Status { url: String, status: u16 },
    #[error("{url}: {message}")]
    Transport { url: String, message: String },
    #[error("{url}: content type {content_type:?} is not HTML")]
    NotHtml { url: String, content_type: String },
    #[error("cache {}: {source}", path.display())]
    Cache {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl FetchError {
    pub fn url(&self) -> Option<&str> {
        match self {
            Self::InvalidUrl { url, .. }
            | Self::Status { url, .. }
            | Self::Transport { url, .. }
            | Self::NotHtml { url, .. } => Some(url),
            Self::Cache { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WebDocument {
    pub url: String,
    pub fetched_at: DateTime<Utc>,
    pub raw_html: Vec<u8>,
    pub text: String,
    /// Test references found in the text; filled in by [`split_corpus`].
    pub referenced_works: BTreeSet<String>,
}

impl WebDocument {
    pub fn from_html(url: impl Into<String>, raw_html: Vec<u8>, fetched_at: DateTime<Utc>) -> Self {
        let text = extract_text(&raw_html);
        Self {
            url: url.into(),
            fetched_at,
            raw_html,
            text,
            referenced_works: BTreeSet::new(),
        }
    }
}

/// Cache file name for `url`: hex SHA-256 of the url bytes.
pub fn cache_key(url: &str) -> String {
    format!("{}.html", hex::encode(Sha256::digest(url.as_bytes())))
}

pub fn validate_url(url: &str) -> Result<url::Url, FetchError> {
    let parsed = url::Url::parse(url).map_err(|e| FetchError::InvalidUrl {
        url: url.to_owned(),
        reason: e.to_string(),
    })?;
    match parsed.scheme() {
        "http" | "https" if parsed.host_str().is_some() => Ok(parsed),
        scheme => Err(FetchError::InvalidUrl {
            url: url.to_owned(),
            reason: format!("unsupported scheme {scheme:?}"),
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub file: String,
    pub status: u16,
    pub fetched_at: DateTime<Utc>,
}

#[derive(Debug, Clone)]
pub struct FetchConfig {
    pub cache_dir: PathBuf,
    pub timeout: Duration,
    /// Minimum spacing between two requests to the same host.
    pub host_delay: Duration,
    pub parallelism: usize,
    pub force_refetch: bool,
}

impl FetchConfig {
    pub fn new(cache_dir: impl Into<PathBuf>) -> Self {
        Self {
            cache_dir: cache_dir.into(),
            timeout: Duration::from_secs(30),
            host_delay: Duration::from_secs(1),
            parallelism: 4,
            force_refetch: false,
        }
    }
}

/// Fetches pages through a content-addressed on-disk cache.
pub struct Fetcher {
    config: FetchConfig,
    agent: ureq::Agent,
    index: Mutex<BTreeMap<String, CacheEntry>>,
    next_slot: Mutex<HashMap<String, Instant>>,
    requests: AtomicUsize,
}

impl Fetcher {
    pub fn new(config: FetchConfig) -> Result<Self, FetchError> {
        let cache_err = |path: &Path| {
            let path = path.to_owned();
            move |source| FetchError::Cache { path, source }
        };
        fs::create_dir_all(&config.cache_dir).map_err(cache_err(&config.cache_dir))?;
        let index_path = config.cache_dir.join(INDEX_FILE);
        let index = match fs::read_to_string(&index_path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| FetchError::Cache {
                path: index_path.clone(),
                source: io::Error::new(io::ErrorKind::InvalidData, e),
            })?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(cache_err(&index_path)(e)),
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .user_agent(concat!("semiokg/", env!("CARGO_PKG_VERSION")))
            .build()
            .into();
        Ok(Self {
            config,
            agent,
            index: Mutex::new(index),
            next_slot: Mutex::new(HashMap::new()),
            requests: AtomicUsize::new(0),
        })
    }

    /// Number of network requests issued so far.
    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn cache_dir(&self) -> &Path {
        &self.config.cache_dir
    }

    pub fn cache_entry(&self, url: &str) -> Option<CacheEntry> {
        self.index.lock().expect("index lock").get(url).cloned()
    }

    pub fn fetch(&self, url: &str) -> Result<WebDocument, FetchError> {
        let parsed = validate_url(url)?;
        if !self.config.force_refetch {
            if let Some(doc) = self.cached(url)? {
                return Ok(doc);
            }
        }
        self.wait_for_host(parsed.host_str().unwrap_or_default());
        self.requests.fetch_add(1, Ordering::SeqCst);
        let transport = |e: ureq::Error| FetchError::Transport {
            url: url.to_owned(),
            message: e.to_string(),
        };
        let mut response = self.agent.get(url).call().map_err(transport)?;
        let status = response.status().as_u16();
        if !response.status().is_success() {
            return Err(FetchError::Status {
                url: url.to_owned(),
                status,
            });
        }
        if let Some(content_type) = response.headers().get("content-type") {
            let content_type = content_type.to_str().unwrap_or_default().to_ascii_lowercase();
            if !(content_type.starts_with("text/html") || content_type.starts_with("application/xhtml+xml")) {
                return Err(FetchError::NotHtml {
                    url: url.to_owned(),
                    content_type,
                });
            }
        }
        let body = response.body_mut().read_to_vec().map_err(transport)?;
        let fetched_at = Utc::now();
        self.store(url, &body, status, fetched_at)?;
        Ok(WebDocument::from_html(url, body, fetched_at))
    }

    /// Fetches every url with bounded parallelism. Results keep input order.
    pub fn fetch_all(&self, urls: &[String]) -> Vec<Result<WebDocument, FetchError>> {
        let next = AtomicUsize::new(0);
        let results: Vec<Mutex<Option<Result<WebDocument, FetchError>>>> =
            urls.iter().map(|_| Mutex::new(None)).collect();
        let workers = self.config.parallelism.clamp(1, urls.len().max(1));
        thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(url) = urls.get(i) else { break };
                    *results[i].lock().expect("result lock") = Some(self.fetch(url));
                });
            }
        });
        results
            .into_iter()
            .map(|slot| slot.into_inner().expect("result lock").expect("every url visited"))
            .collect()
    }

    fn cached(&self, url: &str) -> Result<Option<WebDocument>, FetchError> {
        let Some(entry) = self.cache_entry(url) else {
            return Ok(None);
        };
        let path = self.config.cache_dir.join(&entry.file);
        match fs::read(&path) {
            Ok(body) => Ok(Some(WebDocument::from_html(url, body, entry.fetched_at))),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(source) => Err(FetchError::Cache { path, source }),
        }
    }

    fn store(&self, url: &str, body: &[u8], status: u16, fetched_at: DateTime<Utc>) -> Result<(), FetchError> {
        let file = cache_key(url);
        write_atomic(&self.config.cache_dir.join(&file), body)?;
        let mut index = self.index.lock().expect("index lock");
        index.insert(
            url.to_owned(),
            CacheEntry {
                file,
                status,
                fetched_at,
            },
        );
        let json = serde_json::to_vec_pretty(&*index).expect("index serializes");
        write_atomic(&self.config.cache_dir.join(INDEX_FILE), &json)
    }

    fn wait_for_host(&self, host: &str) {
        let slot = {
            let mut slots = self.next_slot.lock().expect("slot lock");
            let now = Instant::now();
            let slot = slots.get(host).copied().filter(|s| *s > now).unwrap_or(now);
            slots.insert(host.to_owned(), slot + self.config.host_delay);
            slot
        };
        let now = Instant::now();
        if slot > now {
            thread::sleep(slot - now);
        }
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), FetchError> {
    let err = |source| FetchError::Cache {
        path: path.to_owned(),
        source,
    };
    let tmp = path.with_extension(format!("tmp{:?}", thread::current().id()).replace(['(', ')'], ""));
    fs::write(&tmp, bytes).map_err(err)?;
    fs::rename(&tmp, path).map_err(err)
}

const SKIPPED: &[&str] = &[
    "head", "script", "style", "noscript", "template", "svg", "iframe", "object",
];

const BLOCKS: &[&str] = &[
    "address",
    "article",
    "aside",
    "blockquote",
    "body",
    "br",
    "caption",
    "dd",
    "details",
    "div",
    "dl",
    "dt",
    "fieldset",
    "figcaption",
    "figure",
    "footer",
    "form",
    "h1",
    "h2",
    "h3",
    "h4",
    "h5",
    "h6",
    "header",
    "hr",
    "li",
    "main",
    "nav",
    "ol",
    "p",
    "pre",
    "section",
    "summary",
    "table",
    "td",
    "th",
    "tr",
    "ul",
];

/// Visible text of an HTML page: one line per block, whitespace collapsed,
/// entities decoded. Invalid UTF-8 is replaced.
pub fn extract_text(raw_html: &[u8]) -> String {
    let html = Html::parse_document(&String::from_utf8_lossy(raw_html));
    let mut lines: Vec<String> = Vec::new();
    let mut current = String::new();
    let mut skip_depth = 0usize;
    let flush = |current: &mut String, lines: &mut Vec<String>| {
        let line = current.split_whitespace().collect::<Vec<_>>().join(" ");
        if !line.is_empty() {
            lines.push(line);
        }
        current.clear();
    };
    for edge in html.tree.root().traverse() {
        match edge {
            ego_tree::iter::Edge::Open(node) => match node.value() {
                Node::Element(el) if skip_depth > 0 || SKIPPED.contains(&el.name()) => skip_depth += 1,
                Node::Element(el) if BLOCKS.contains(&el.name()) => flush(&mut current, &mut lines),
                Node::Text(text) if skip_depth == 0 => {
                    current.extend(text.chars().map(|c| if c.is_control() { ' ' } else { c }));
                }
                _ => {}
            },
            ego_tree::iter::Edge::Close(node) => match node.value() {
                Node::Element(_) if skip_depth > 0 => skip_depth -= 1,
                Node::Element(el) if BLOCKS.contains(&el.name()) => flush(&mut current, &mut lines),
                _ => {}
            },
        }
    }
    flush(&mut current, &mut lines);
    lines.join("\n")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorpusSplit {
    pub train: Vec<WebDocument>,
    pub test: Vec<WebDocument>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no test references given")]
pub struct NoReferences;

fn fold_for_matching(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Sends a document to the test side iff its text mentions any reference,
/// case-insensitively. Both sides are ordered by url.
pub fn split_corpus<S: AsRef<str>>(docs: Vec<WebDocument>, test_refs: &[S]) -> Result<CorpusSplit, NoReferences> {
    let refs: Vec<(String, String)> = test_refs
        .iter()
        .map(|r| r.as_ref().trim())
        .filter(|r| !r.is_empty())
        .map(|r| (r.to_owned(), fold_for_matching(r)))
        .collect();
    if refs.is_empty() {
        return Err(NoReferences);
    }
    let mut split = CorpusSplit::default();
    for mut doc in docs {
        let haystack = fold_for_matching(&doc.text);
        doc.referenced_works = refs
            .iter()
            .filter(|(_, folded)| haystack.contains(folded.as_str()))
            .map(|(original, _)| original.clone())
            .collect();
        if doc.referenced_works.is_empty() {
            split.train.push(doc);
        } else {
            split.test.push(doc);
        }
    }
    split.train.sort_by(|a, b| a.url.cmp(&b.url));
    split.test.sort_by(|a, b| a.url.cmp(&b.url));
    Ok(split)
}

/// Non-blank lines not starting with `#`, trimmed.
pub fn parse_line_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_owned)
        .collect()
}

/// One row of the extracted-corpus manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub url: String,
    pub cache_file: String,
    pub text_file: String,
    pub split: Option<Split>,
}
