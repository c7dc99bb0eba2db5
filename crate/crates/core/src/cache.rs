//! On-disk resource cache: `<dir>/<content_hash>/{original,instrumented,elided,meta}`.
//!
//! `original` holds the decoded origin body, the two variants hold the most
//! recently generated transformed bodies, and `meta` is JSON ([`CacheMeta`]).

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analyzer::ResourceAnalysis;
use crate::codec::ContentEncoding;
use crate::key::ResourceKey;
use crate::store::{write_atomic, StoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Original,
    Instrumented,
    Elided,
}

impl Variant {
    pub fn file_name(self) -> &'static str {
        match self {
            Variant::Original => "original",
            Variant::Instrumented => "instrumented",
            Variant::Elided => "elided",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheMeta {
    pub key: ResourceKey,
    pub status: u16,
    /// Origin response headers in arrival order.
    pub headers: Vec<(String, String)>,
    pub original_encoding: ContentEncoding,
    pub content_type: Option<String>,
    /// Epoch milliseconds.
    pub fetched_at: u64,
    pub is_js: bool,
    /// The body could not be decoded and is stored exactly as received; it is
    /// never transformed.
    #[serde(default)]
    pub opaque: bool,
    /// `None` until the body has been analyzed, and for non-JS resources.
    pub analysis: Option<ResourceAnalysis>,
}

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("not a content hash: {0:?}")]
    BadHash(String),
    #[error("corrupt cache metadata {path}: {source}")]
    Meta {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl From<StoreError> for CacheError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Io(e) => CacheError::Io(e),
            other => CacheError::Io(io::Error::other(other.to_string())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DiskCache {
    root: PathBuf,
}

impl DiskCache {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, CacheError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dir(&self, hash: &str) -> Result<PathBuf, CacheError> {
        let ok = hash.len() == 64 && hash.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'));
        if !ok {
            return Err(CacheError::BadHash(hash.to_string()));
        }
        Ok(self.root.join(hash))
    }

    pub fn write_meta(&self, meta: &CacheMeta) -> Result<(), CacheError> {
        let path = self.dir(&meta.key.content_hash)?.join("meta");
        let json = serde_json::to_vec_pretty(meta).expect("meta serializes");
        write_atomic(&path, &json)?;
        Ok(())
    }

    pub fn read_meta(&self, hash: &str) -> Result<Option<CacheMeta>, CacheError> {
        let path = self.dir(hash)?.join("meta");
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|source| CacheError::Meta { path, source }),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    pub fn write_variant(&self, hash: &str, variant: Variant, body: &[u8]) -> Result<(), CacheError> {
        write_atomic(&self.dir(hash)?.join(variant.file_name()), body)?;
        Ok(())
    }

    pub fn read_variant(&self, hash: &str, variant: Variant) -> Result<Option<Vec<u8>>, CacheError> {
        match fs::read(self.dir(hash)?.join(variant.file_name())) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// Stores a freshly fetched resource: its decoded body, then its metadata.
    pub fn put(&self, meta: &CacheMeta, decoded: &[u8]) -> Result<(), CacheError> {
        self.write_variant(&meta.key.content_hash, Variant::Original, decoded)?;
        self.write_meta(meta)
    }

    /// Every entry with readable metadata, ordered by content hash. Entries
    /// whose metadata is missing or unreadable are skipped with a warning.
    pub fn entries(&self) -> Result<Vec<CacheMeta>, CacheError> {
        let mut names: Vec<String> = fs::read_dir(&self.root)?
            .filter_map(|e| e.ok())
            .filter(|e| e.file_type().is_ok_and(|t| t.is_dir()))
            .filter_map(|e| e.file_name().into_string().ok())
            .collect();
        names.sort();
        let mut out = Vec::with_capacity(names.len());
        for name in names {
            match self.read_meta(&name) {
                Ok(Some(meta)) => out.push(meta),
                Ok(None) => {}
                Err(e) => tracing::warn!(entry = %name, error = %e, "skipping cache entry"),
            }
        }
        Ok(out)
    }
}
