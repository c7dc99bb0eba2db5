//! Per-resource coverage accumulated from beacons.
//!
//! The state file is plain text:
//!
//! ```text
//! jselide-coverage 1
//! {"key":{..},"executed":{"<id>":<beacon ordinal>,..},"beacon_count":..,..}
//! ...
//! #end records=<n> sha256=<hex digest of every preceding byte>
//! ```
//!
//! It is rewritten through a temporary file and renamed into place, so a
//! reader sees either the old or the new state in full.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::analyzer::FunctionId;
use crate::key::ResourceKey;

pub const BEACON_VERSION: u64 = 1;
const HEADER: &str = "jselide-coverage 1";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("unsupported beacon version {0}")]
    UnsupportedVersion(u64),
    #[error("malformed beacon: {0}")]
    MalformedBeacon(String),
    #[error("corrupt coverage state in {path}: {reason}")]
    CorruptState { path: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One page load's report for one resource.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageBeacon {
    pub version: u64,
    pub key: ResourceKey,
    pub ids: Vec<FunctionId>,
    pub page_url: Option<String>,
    /// Milliseconds since the Unix epoch.
    pub received_at: u64,
}

impl CoverageBeacon {
    /// Parses the wire form `{"v":1,"key":{"url":..,"hash":..},"ids":[..],"page":..}`.
    pub fn from_json(body: &[u8], received_at: u64) -> Result<Self, StoreError> {
        let malformed = |m: &str| StoreError::MalformedBeacon(m.to_string());
        let v: Value = serde_json::from_slice(body).map_err(|e| StoreError::MalformedBeacon(e.to_string()))?;
        let obj = v.as_object().ok_or_else(|| malformed("not an object"))?;

        let version = obj.get("v").and_then(Value::as_u64).ok_or_else(|| malformed("missing version"))?;
        if version != BEACON_VERSION {
            return Err(StoreError::UnsupportedVersion(version));
        }

        let key = obj.get("key").and_then(Value::as_object).ok_or_else(|| malformed("missing key"))?;
        let url = key.get("url").and_then(Value::as_str).ok_or_else(|| malformed("missing key.url"))?;
        let hash = key.get("hash").and_then(Value::as_str).ok_or_else(|| malformed("missing key.hash"))?;
        if hash.len() != 64 || !hash.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            return Err(malformed("key.hash is not a sha256 hex digest"));
        }

        let ids = obj.get("ids").and_then(Value::as_array).ok_or_else(|| malformed("ids is not a list"))?;
        let ids = ids
            .iter()
            .map(|id| id.as_str().and_then(FunctionId::parse).ok_or_else(|| malformed("invalid function id")))
            .collect::<Result<Vec<_>, _>>()?;

        let page_url = match obj.get("page") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => return Err(malformed("page is not a string")),
        };

        Ok(Self {
            version,
            key: ResourceKey { url: url.to_string(), content_hash: hash.to_string() },
            ids,
            page_url,
            received_at,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({
            "v": self.version,
            "key": self.key,
            "ids": self.ids,
            "page": self.page_url,
        })
        .to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageRecord {
    pub key: ResourceKey,
    /// Every id ever reported, with the ordinal (1-based) of the beacon that
    /// first reported it.
    pub executed: BTreeMap<FunctionId, u64>,
    pub beacon_count: u64,
    /// Earliest and latest beacon receive times, in epoch milliseconds.
    pub first_seen: u64,
    pub last_updated: u64,
    /// Pages that loaded this resource, from the beacons' page field.
    pub pages: BTreeSet<String>,
}

impl CoverageRecord {
    pub fn empty(key: ResourceKey, at: u64) -> Self {
        Self {
            key,
            executed: BTreeMap::new(),
            beacon_count: 0,
            first_seen: at,
            last_updated: at,
            pages: BTreeSet::new(),
        }
    }

    /// Returns how many of the beacon's ids were not seen before.
    fn absorb(&mut self, beacon: &CoverageBeacon) -> usize {
        self.beacon_count += 1;
        self.first_seen = self.first_seen.min(beacon.received_at);
        self.last_updated = self.last_updated.max(beacon.received_at);
        if let Some(page) = &beacon.page_url {
            self.pages.insert(page.clone());
        }
        let mut fresh = 0;
        for id in &beacon.ids {
            if !self.executed.contains_key(id) {
                self.executed.insert(id.clone(), self.beacon_count);
                fresh += 1;
            }
        }
        fresh
    }

    pub fn executed_set(&self) -> HashSet<FunctionId> {
        self.executed.keys().cloned().collect()
    }

    /// Number of ids first reported by each beacon, indexed from beacon 1.
    pub fn new_ids_per_beacon(&self) -> Vec<usize> {
        let mut out = vec![0; self.beacon_count as usize];
        for &ordinal in self.executed.values() {
            if let Some(slot) = out.get_mut(ordinal as usize - 1) {
                *slot += 1;
            }
        }
        out
    }

    /// Ids first reported after the first beacon.
    pub fn late_ids(&self) -> usize {
        self.executed.values().filter(|&&o| o > 1).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhasePolicy {
    pub min_beacons: u64,
    /// Holds every resource in learning regardless of beacon count.
    pub freeze: bool,
}

impl Default for PhasePolicy {
    fn default() -> Self {
        Self { min_beacons: 5, freeze: false }
    }
}

impl PhasePolicy {
    /// `min_beacons` is clamped to at least 1.
    pub fn new(min_beacons: u64, freeze: bool) -> Self {
        Self { min_beacons: min_beacons.max(1), freeze }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResourcePhase {
    Learning,
    Elided,
}

/// Thread-safe coverage state, optionally backed by a file.
///
/// With a backing file every accepted beacon is persisted before
/// [`record_beacon`](Self::record_beacon) returns.
#[derive(Debug, Default)]
pub struct CoverageStore {
    records: RwLock<BTreeMap<ResourceKey, CoverageRecord>>,
    path: Option<PathBuf>,
    // Serializes file rewrites so a slower writer cannot replace newer state.
    persist: Mutex<()>,
}

impl CoverageStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens `path`, loading it if it exists. A missing file is an empty store.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let path = path.into();
        let records = if path.exists() { read_state(&path)? } else { BTreeMap::new() };
        Ok(Self { records: RwLock::new(records), path: Some(path), persist: Mutex::new(()) })
    }

    /// Loads `path`, which must exist, without attaching it as the backing
    /// file.
    pub fn load(path: &Path) -> Result<Self, StoreError> {
        Ok(Self { records: RwLock::new(read_state(path)?), ..Self::default() })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Merges `beacon` into its record and returns the updated record.
    pub fn record_beacon(&self, beacon: &CoverageBeacon) -> Result<CoverageRecord, StoreError> {
        if beacon.version != BEACON_VERSION {
            return Err(StoreError::UnsupportedVersion(beacon.version));
        }
        let _guard = self.persist.lock().unwrap_or_else(|e| e.into_inner());
        let (record, fresh) = {
            let mut records = self.records.write().unwrap_or_else(|e| e.into_inner());
            let record = records
                .entry(beacon.key.clone())
                .or_insert_with(|| CoverageRecord::empty(beacon.key.clone(), beacon.received_at));
            let fresh = record.absorb(beacon);
            (record.clone(), fresh)
        };
        tracing::debug!(key = %beacon.key, ids = beacon.ids.len(), fresh, count = record.beacon_count, "beacon recorded");
        if let Some(path) = &self.path {
            let text = render_state(&self.records.read().unwrap_or_else(|e| e.into_inner()));
            write_atomic(path, text.as_bytes())?;
        }
        Ok(record)
    }

    pub fn executed_ids(&self, key: &ResourceKey) -> HashSet<FunctionId> {
        self.record(key).map(|r| r.executed_set()).unwrap_or_default()
    }

    pub fn record(&self, key: &ResourceKey) -> Option<CoverageRecord> {
        self.records.read().unwrap_or_else(|e| e.into_inner()).get(key).cloned()
    }

    pub fn records(&self) -> Vec<CoverageRecord> {
        self.records.read().unwrap_or_else(|e| e.into_inner()).values().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.records.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn phase(&self, key: &ResourceKey, policy: &PhasePolicy) -> ResourcePhase {
        let count = self.record(key).map_or(0, |r| r.beacon_count);
        phase_for(count, policy)
    }

    /// Writes the whole state to `path` atomically.
    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        let _guard = self.persist.lock().unwrap_or_else(|e| e.into_inner());
        let text = render_state(&self.records.read().unwrap_or_else(|e| e.into_inner()));
        write_atomic(path, text.as_bytes())
    }
}

pub fn phase_for(beacon_count: u64, policy: &PhasePolicy) -> ResourcePhase {
    if !policy.freeze && beacon_count >= policy.min_beacons.max(1) {
        ResourcePhase::Elided
    } else {
        ResourcePhase::Learning
    }
}

fn render_state(records: &BTreeMap<ResourceKey, CoverageRecord>) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for record in records.values() {
        out.push_str(&serde_json::to_string(record).expect("record serializes"));
        out.push('\n');
    }
    let digest = hex::encode(Sha256::digest(out.as_bytes()));
    out.push_str(&format!("#end records={} sha256={digest}\n", records.len()));
    out
}

fn parse_state(text: &str) -> Result<BTreeMap<ResourceKey, CoverageRecord>, String> {
    let body = text.strip_suffix('\n').ok_or("missing final newline")?;
    let footer_at = body.rfind('\n').map_or(0, |i| i + 1);
    let (content, footer) = body.split_at(footer_at);
    let rest = footer.strip_prefix("#end records=").ok_or("missing footer")?;
    let (count, digest) = rest.split_once(" sha256=").ok_or("malformed footer")?;
    let count: usize = count.parse().map_err(|_| "malformed record count")?;
    if hex::encode(Sha256::digest(content.as_bytes())) != digest {
        return Err("checksum mismatch".into());
    }

    let mut lines = content.lines();
    if lines.next() != Some(HEADER) {
        return Err("unknown header".into());
    }
    let mut records = BTreeMap::new();
    for (i, line) in lines.enumerate() {
        let record: CoverageRecord =
            serde_json::from_str(line).map_err(|e| format!("record {}: {e}", i + 1))?;
        records.insert(record.key.clone(), record);
    }
    if records.len() != count {
        return Err(format!("footer says {count} records, found {}", records.len()));
    }
    Ok(records)
}

fn read_state(path: &Path) -> Result<BTreeMap<ResourceKey, CoverageRecord>, StoreError> {
    let bytes = fs::read(path)?;
    let text = String::from_utf8(bytes).map_err(|_| StoreError::CorruptState {
        path: path.to_path_buf(),
        reason: "not UTF-8".into(),
    })?;
    parse_state(&text).map_err(|reason| StoreError::CorruptState { path: path.to_path_buf(), reason })
}

/// Replaces `path` with `bytes` via a synced temporary file in the same
/// directory.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| StoreError::Io(e.error))?;
    Ok(())
}
