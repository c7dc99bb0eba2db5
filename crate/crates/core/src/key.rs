use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Identity of one fetched script: where it came from and exactly which bytes
/// were served. Coverage is learned per key, so a changed origin body starts
/// from scratch.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ResourceKey {
    pub url: String,
    #[serde(rename = "hash")]
    pub content_hash: String,
}

impl ResourceKey {
    /// Builds a key from a URL and the decoded body. Any fragment is dropped
    /// from the URL.
    pub fn new(url: &str, body: &[u8]) -> Self {
        Self {
            url: canonical_url(url),
            content_hash: content_hash(body),
        }
    }

    pub fn matches(&self, body: &[u8]) -> bool {
        self.content_hash == content_hash(body)
    }

    /// First 16 hex digits of the hash, used to derive per-resource global names.
    pub fn short_hash(&self) -> &str {
        let end = self.content_hash.len().min(16);
        &self.content_hash[..end]
    }
}

impl fmt::Display for ResourceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.url, self.short_hash())
    }
}

/// Lowercase hex SHA-256 of `body`.
pub fn content_hash(body: &[u8]) -> String {
    hex::encode(Sha256::digest(body))
}

fn canonical_url(url: &str) -> String {
    match url.find('#') {
        Some(i) => url[..i].to_string(),
        None => url.to_string(),
    }
}
