//! Fetch-once resource cache and memoized script variants.
//!
//! Each URL is fetched from the origin at most once (concurrent requests for
//! it wait on the same fetch) unless [`ResourceCache::refetch`] is called.
//! Analysis happens inside that fetch; the instrumented variant is built once
//! per content hash and the elided variant once per (content hash, executed
//! set).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use bytes::Bytes;
use http::{HeaderMap, Method};
use jselide_core::analyzer::{analyze, FunctionId, ResourceAnalysis};
use jselide_core::cache::{CacheError, CacheMeta, DiskCache, Variant};
use jselide_core::codec::{decode, ContentEncoding};
use jselide_core::runtime::RuntimeTemplates;
use jselide_core::transform::{elide, instrument, ElisionPolicy};
use jselide_core::ResourceKey;
use sha2::{Digest, Sha256};
use tokio::sync::OnceCell;

use crate::origin::{OriginClient, OriginError};

pub const BEACON_PATH: &str = "/__jscov__/beacon";
pub const SIDECAR_PREFIX: &str = "/__jscov__/body/";

/// Sidecar URL base for a content hash; a unit's body lives at `<base>/<id>`.
pub fn sidecar_base(content_hash: &str) -> String {
    format!("{SIDECAR_PREFIX}{content_hash}")
}

#[derive(Debug, thiserror::Error)]
pub enum ResourceError {
    #[error(transparent)]
    Origin(#[from] OriginError),
    #[error(transparent)]
    Cache(#[from] CacheError),
}

/// One cached origin response.
#[derive(Debug)]
pub struct CachedResource {
    pub meta: CacheMeta,
    /// Decoded body, or the raw body when `meta.opaque`.
    pub body: Bytes,
}

impl CachedResource {
    pub fn key(&self) -> &ResourceKey {
        &self.meta.key
    }

    /// UTF-8 text and a successful parse: the precondition for any transform.
    pub fn transformable(&self) -> Option<(&str, &ResourceAnalysis)> {
        if !self.meta.is_js || self.meta.opaque {
            return None;
        }
        let analysis = self.meta.analysis.as_ref().filter(|a| a.parse_ok)?;
        Some((std::str::from_utf8(&self.body).ok()?, analysis))
    }
}

#[derive(Debug, Clone)]
pub struct ElidedVariant {
    pub body: Bytes,
    pub elided_functions: usize,
    pub sidecars: BTreeMap<FunctionId, String>,
}

type Cell<T> = Arc<OnceCell<Option<T>>>;

pub struct ResourceCache {
    disk: DiskCache,
    origin: OriginClient,
    /// URL to content hash of its latest fetch.
    index: Mutex<HashMap<String, String>>,
    flights: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
    hot: Mutex<HashMap<String, Arc<CachedResource>>>,
    instrumented: Mutex<HashMap<String, Cell<Bytes>>>,
    elided: Mutex<HashMap<(String, String), Cell<ElidedVariant>>>,
    origin_fetches: AtomicU64,
    transforms: AtomicU64,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

/// Whether a response is a script, from its content type or, when that says
/// nothing useful, the URL path.
pub fn looks_like_js(content_type: Option<&str>, url: &str) -> bool {
    let ct = content_type.map(|c| c.split(';').next().unwrap_or("").trim().to_ascii_lowercase());
    match ct.as_deref() {
        Some(c) if c.contains("javascript") || c.contains("ecmascript") => true,
        None | Some("" | "text/plain" | "application/octet-stream") => {
            let path = url.split(['?', '#']).next().unwrap_or(url);
            path.ends_with(".js") || path.ends_with(".mjs")
        }
        Some(_) => false,
    }
}

/// Stable digest of an executed-id set.
pub fn fingerprint(executed: &HashSet<FunctionId>) -> String {
    let mut ids: Vec<&str> = executed.iter().map(FunctionId::as_str).collect();
    ids.sort_unstable();
    let mut h = Sha256::new();
    for id in ids {
        h.update(id.as_bytes());
        h.update(b"\n");
    }
    hex::encode(&h.finalize()[..16])
}

impl ResourceCache {
    /// Opens the cache and rebuilds the URL index from existing entries; the
    /// most recently fetched entry wins for each URL.
    pub fn new(disk: DiskCache, origin: OriginClient) -> Result<Self, CacheError> {
        let mut latest: HashMap<String, (u64, String)> = HashMap::new();
        for meta in disk.entries()? {
            let slot = latest.entry(meta.key.url.clone()).or_insert((0, String::new()));
            if meta.fetched_at >= slot.0 {
                *slot = (meta.fetched_at, meta.key.content_hash.clone());
            }
        }
        let index = latest.into_iter().map(|(url, (_, hash))| (url, hash)).collect();
        Ok(Self {
            disk,
            origin,
            index: Mutex::new(index),
            flights: Mutex::default(),
            hot: Mutex::default(),
            instrumented: Mutex::default(),
            elided: Mutex::default(),
            origin_fetches: AtomicU64::new(0),
            transforms: AtomicU64::new(0),
        })
    }

    pub fn disk(&self) -> &DiskCache {
        &self.disk
    }

    pub fn origin(&self) -> &OriginClient {
        &self.origin
    }

    /// Origin requests made through [`get`](Self::get) and
    /// [`refetch`](Self::refetch).
    pub fn origin_fetches(&self) -> u64 {
        self.origin_fetches.load(Ordering::Relaxed)
    }

    /// Instrumented and elided variants built so far.
    pub fn transforms(&self) -> u64 {
        self.transforms.load(Ordering::Relaxed)
    }

    /// The cached resource for `url`, fetching it on first use. Non-200
    /// responses are returned but not cached.
    pub async fn get(&self, url: &str, headers: &HeaderMap) -> Result<Arc<CachedResource>, ResourceError> {
        if let Some(hit) = self.lookup(url)? {
            return Ok(hit);
        }
        let flight = lock(&self.flights).entry(url.to_string()).or_default().clone();
        let _guard = flight.lock().await;
        if let Some(hit) = self.lookup(url)? {
            return Ok(hit);
        }
        self.fetch(url, headers).await
    }

    /// Fetches `url` again regardless of the cache. If the origin content
    /// changed, the new resource has a new key and no coverage.
    pub async fn refetch(&self, url: &str, headers: &HeaderMap) -> Result<Arc<CachedResource>, ResourceError> {
        let flight = lock(&self.flights).entry(url.to_string()).or_default().clone();
        let _guard = flight.lock().await;
        self.fetch(url, headers).await
    }

    /// A cached resource by content hash.
    pub fn by_hash(&self, hash: &str) -> Result<Option<Arc<CachedResource>>, CacheError> {
        if let Some(r) = lock(&self.hot).get(hash) {
            return Ok(Some(r.clone()));
        }
        let Some(meta) = self.disk.read_meta(hash)? else {
            return Ok(None);
        };
        let Some(body) = self.disk.read_variant(hash, Variant::Original)? else {
            return Ok(None);
        };
        let resource = Arc::new(CachedResource { meta, body: Bytes::from(body) });
        lock(&self.hot).insert(hash.to_string(), resource.clone());
        Ok(Some(resource))
    }

    fn lookup(&self, url: &str) -> Result<Option<Arc<CachedResource>>, CacheError> {
        let Some(hash) = lock(&self.index).get(url).cloned() else {
            return Ok(None);
        };
        self.by_hash(&hash)
    }

    async fn fetch(&self, url: &str, headers: &HeaderMap) -> Result<Arc<CachedResource>, ResourceError> {
        self.origin_fetches.fetch_add(1, Ordering::Relaxed);
        let resp = self.origin.fetch(Method::GET, url, headers, Bytes::new()).await?;
        let content_type = resp.header("content-type").map(str::to_string);
        let is_js = looks_like_js(content_type.as_deref(), url);

        let (encoding, body, opaque) = match ContentEncoding::from_header(resp.header("content-encoding")) {
            Ok(enc) => match decode(&resp.body, enc) {
                Ok(decoded) => (enc, Bytes::from(decoded), false),
                Err(e) => {
                    tracing::warn!(%url, error = %e, "undecodable body stored as opaque");
                    (enc, resp.body.clone(), true)
                }
            },
            Err(e) => {
                tracing::warn!(%url, error = %e, "unknown encoding; body stored as opaque");
                (ContentEncoding::Identity, resp.body.clone(), true)
            }
        };

        let key = ResourceKey::new(url, &body);
        let analysis = (is_js && !opaque).then(|| match std::str::from_utf8(&body) {
            Ok(text) => analyze(text, &key).unwrap_or_else(|e| {
                tracing::warn!(%url, error = %e, "script does not parse; it will be served unmodified");
                ResourceAnalysis::unparsed(key.clone(), body.len())
            }),
            Err(_) => ResourceAnalysis::unparsed(key.clone(), body.len()),
        });

        let meta = CacheMeta {
            key: key.clone(),
            status: resp.status,
            headers: resp.headers.clone(),
            original_encoding: encoding,
            content_type,
            fetched_at: now_ms(),
            is_js,
            opaque,
            analysis,
        };
        let resource = Arc::new(CachedResource { meta, body });
        if resp.status != 200 {
            return Ok(resource);
        }
        self.disk.put(&resource.meta, &resource.body)?;
        lock(&self.hot).insert(key.content_hash.clone(), resource.clone());
        lock(&self.index).insert(url.to_string(), key.content_hash.clone());
        tracing::info!(%url, hash = key.short_hash(), is_js, units = resource.meta.analysis.as_ref().map_or(0, |a| a.units.len()), "cached");
        Ok(resource)
    }

    /// The instrumented body, or `None` when the resource cannot be
    /// transformed.
    pub async fn instrumented(&self, resource: &CachedResource, templates: &RuntimeTemplates) -> Option<Bytes> {
        let hash = resource.key().content_hash.clone();
        let cell = lock(&self.instrumented).entry(hash.clone()).or_default().clone();
        cell.get_or_init(|| async {
            let (text, analysis) = resource.transformable()?;
            self.transforms.fetch_add(1, Ordering::Relaxed);
            match instrument(text, analysis, templates, BEACON_PATH) {
                Ok(out) => {
                    if let Err(e) = self.disk.write_variant(&hash, Variant::Instrumented, out.body.as_bytes()) {
                        tracing::warn!(error = %e, "could not write instrumented variant");
                    }
                    Some(Bytes::from(out.body))
                }
                Err(e) => {
                    tracing::warn!(key = %resource.key(), error = %e, "instrumentation failed; serving original");
                    None
                }
            }
        })
        .await
        .clone()
    }

    /// The elided body for `executed`, or `None` when the resource cannot be
    /// transformed.
    pub async fn elided(
        &self,
        resource: &CachedResource,
        executed: &HashSet<FunctionId>,
        policy: &ElisionPolicy,
        templates: &RuntimeTemplates,
    ) -> Option<ElidedVariant> {
        let hash = resource.key().content_hash.clone();
        let memo = (hash.clone(), fingerprint(executed));
        let cell = lock(&self.elided).entry(memo).or_default().clone();
        cell.get_or_init(|| async {
            let (text, analysis) = resource.transformable()?;
            self.transforms.fetch_add(1, Ordering::Relaxed);
            match elide(text, analysis, executed, policy, templates, &sidecar_base(&hash)) {
                Ok(out) => {
                    if let Err(e) = self.disk.write_variant(&hash, Variant::Elided, out.body.as_bytes()) {
                        tracing::warn!(error = %e, "could not write elided variant");
                    }
                    tracing::info!(
                        key = %resource.key(),
                        elided = out.stats.elided_functions,
                        saved = out.stats.elided_bytes,
                        "elided variant built"
                    );
                    Some(ElidedVariant {
                        body: Bytes::from(out.body),
                        elided_functions: out.stats.elided_functions,
                        sidecars: out.sidecars,
                    })
                }
                Err(e) => {
                    tracing::warn!(key = %resource.key(), error = %e, "elision failed; serving original");
                    None
                }
            }
        })
        .await
        .clone()
    }
}
