#![allow(dead_code)]

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

#[path = "../../../core/tests/common/oracle.rs"]
pub mod oracle;

pub fn fixtures() -> PathBuf {
    oracle::fixtures_dir()
}

pub fn fixture_config() -> PathBuf {
    fixtures().join("config.toml")
}

/// Runs the binary with the fixture config and `out` as the output directory.
pub fn run_in(out: &Path, args: &[&str]) -> Output {
    let mut full = vec!["--config".to_string(), fixture_config().display().to_string()];
    full.push("--output-dir".into());
    full.push(out.display().to_string());
    full.extend(args.iter().map(|a| a.to_string()));
    run(&full.iter().map(String::as_str).collect::<Vec<_>>())
}

pub fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semiokg"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn stdout(output: &Output) -> String {
    String::from_utf8(output.stdout.clone()).unwrap()
}

pub fn stderr(output: &Output) -> String {
    String::from_utf8(output.stderr.clone()).unwrap()
}

#[track_caller]
pub fn assert_exit(output: &Output, code: i32) {
    assert_eq!(
        output.status.code(),
        Some(code),
        "stdout:\n{}\nstderr:\n{}",
        stdout(output),
        stderr(output)
    );
}

/// Writes a config whose paths point at the fixtures, with extra TOML lines
/// appended to the named sections.
pub fn write_config(dir: &Path, paths_extra: &str, fetch_extra: &str) -> PathBuf {
    let f = fixtures();
    let q = |name: &str| format!("{:?}", f.join(name).display().to_string());
    let text = format!(
        "[paths]\nframes = {}\nner = {}\nembeddings = {}\ndetections = {}\ngold_kg = {}\ngold_e2e = {}\ntest_refs = {}\n{paths_extra}\n[fetch]\ndelay_ms = 0\ntimeout_secs = 5\n{fetch_extra}\n",
        q("frames.jsonl"),
        q("ner.jsonl"),
        q("embeddings.jsonl"),
        q("detections.jsonl"),
        q("gold_kg.json"),
        q("gold_e2e.json"),
        q("corpus96/test_refs.txt"),
    );
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

/// HTTP/1.1 server answering from a fixed route table; unknown paths get 404.
pub struct TestServer {
    pub base: String,
    hits: Arc<AtomicUsize>,
}

impl TestServer {
    pub fn start(routes: Vec<(String, u16, String)>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let routes: HashMap<String, (u16, String)> = routes.into_iter().map(|(p, s, b)| (p, (s, b))).collect();
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = Arc::clone(&hits);
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut request_line = String::new();
                if reader.read_line(&mut request_line).is_err() {
                    continue;
                }
                loop {
                    let mut header = String::new();
                    if reader.read_line(&mut header).unwrap_or(0) == 0 || header == "\r\n" {
                        break;
                    }
                }
                counter.fetch_add(1, Ordering::SeqCst);
                let path = request_line.split(' ').nth(1).unwrap_or("/");
                let (status, body) = routes.get(path).cloned().unwrap_or((404, "<p>gone</p>".into()));
                let response = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: text/html; charset=utf-8\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                let _ = stream.write_all(response.as_bytes());
            }
        });
        Self { base, hits }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

/// The 96-page fixture corpus served from a local server, plus its url list.
pub fn serve_corpus96() -> (TestServer, Vec<String>) {
    let pages: Vec<(String, String)> = oracle::read_fixture("corpus96/pages.jsonl")
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            let url = v["url"].as_str().unwrap();
            let path = url.trim_start_matches("https://vanitas.example").to_string();
            (path, v["html"].as_str().unwrap().to_string())
        })
        .collect();
    let server = TestServer::start(pages.iter().map(|(p, h)| (p.clone(), 200, h.clone())).collect());
    let urls = pages.iter().map(|(p, _)| server.url(p)).collect();
    (server, urls)
}
