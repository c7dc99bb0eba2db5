#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use jselide_core::{analyze, ResourceAnalysis, ResourceKey};
use serde::Deserialize;

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/corpus")
}

pub struct CorpusFile {
    pub name: String,
    pub source: String,
}

impl CorpusFile {
    pub fn key(&self) -> ResourceKey {
        ResourceKey::new(&format!("https://corpus.test/{}", self.name), self.source.as_bytes())
    }

    pub fn analysis(&self) -> ResourceAnalysis {
        analyze(&self.source, &self.key()).unwrap_or_else(|e| panic!("{}: {e}", self.name))
    }
}

pub fn corpus() -> Vec<CorpusFile> {
    let mut files: Vec<_> = std::fs::read_dir(corpus_dir())
        .unwrap()
        .filter_map(|e| {
            let path = e.unwrap().path();
            let name = path.file_name()?.to_str()?.to_string();
            (name.ends_with(".js") || name.ends_with(".mjs")).then(|| CorpusFile {
                source: std::fs::read_to_string(&path).unwrap(),
                name,
            })
        })
        .collect();
    files.sort_by(|a, b| a.name.cmp(&b.name));
    files
}

#[derive(Debug, Deserialize)]
pub struct LabelledFile {
    pub source_type: String,
    pub source_len: usize,
    pub units: Vec<LabelledUnit>,
}

#[derive(Debug, Deserialize, PartialEq, Eq)]
pub struct LabelledUnit {
    pub kind: String,
    pub name: Option<String>,
    pub span: [usize; 2],
    pub body_span: [usize; 2],
    pub is_anonymous: bool,
    pub is_async: bool,
    pub is_generator: bool,
    pub depth: u32,
}

pub fn labels() -> BTreeMap<String, LabelledFile> {
    let text = std::fs::read_to_string(corpus_dir().join("labels.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

pub fn as_labels(analysis: &ResourceAnalysis) -> Vec<LabelledUnit> {
    analysis
        .units
        .iter()
        .map(|u| LabelledUnit {
            kind: u.kind.to_string(),
            name: u.name.clone(),
            span: [u.span.start, u.span.end],
            body_span: [u.body_span.start, u.body_span.end],
            is_anonymous: u.is_anonymous,
            is_async: u.is_async,
            is_generator: u.is_generator,
            depth: u.depth,
        })
        .collect()
}

/// Locates `node` on PATH; engine-backed tests are skipped without it.
pub fn node() -> Option<PathBuf> {
    let out = std::process::Command::new("node").arg("--version").output().ok()?;
    out.status.success().then(|| PathBuf::from("node"))
}
