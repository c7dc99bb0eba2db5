//! Request routing: beacon and sidecar endpoints, and variant selection for
//! everything else.

use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use bytes::Bytes;
use http::header::{self, HeaderName, HeaderValue};
use http::{Method, Request, Response, StatusCode};
use http_body_util::Full;
use jselide_core::cache::DiskCache;
use jselide_core::codec::{transcode, ContentEncoding};
use jselide_core::party::{url_host, Party};
use jselide_core::store::StoreError;
use jselide_core::transform::sidecar_for;
use jselide_core::{CoverageBeacon, CoverageStore, FunctionId, ResourcePhase};

use crate::config::{ProxyConfig, ServeMode};
use crate::origin::{is_hop_by_hop, OriginClient, OriginError};
use crate::resources::{CachedResource, ResourceCache, ResourceError, BEACON_PATH, SIDECAR_PREFIX};

pub type ProxyResponse = Response<Full<Bytes>>;

pub const VARIANT_HEADER: &str = "x-jselide-variant";

/// How a request reached the proxy.
#[derive(Debug, Clone, Default)]
pub struct RequestContext {
    /// Arrived over a TLS session the proxy terminated.
    pub tls: bool,
    /// `host:port` from the CONNECT that opened this tunnel, if any.
    pub authority: Option<String>,
}

impl RequestContext {
    pub fn plain() -> Self {
        Self::default()
    }

    pub fn tunnel(authority: impl Into<String>, tls: bool) -> Self {
        Self { tls, authority: Some(authority.into()) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServedVariant {
    Original,
    Instrumented,
    Elided,
}

impl ServedVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            ServedVariant::Original => "original",
            ServedVariant::Instrumented => "instrumented",
            ServedVariant::Elided => "elided",
        }
    }
}

pub struct Proxy {
    config: ProxyConfig,
    store: Arc<CoverageStore>,
    resources: ResourceCache,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

fn text(status: StatusCode, body: impl Into<String>) -> ProxyResponse {
    let mut resp = Response::new(Full::new(Bytes::from(body.into())));
    *resp.status_mut() = status;
    resp.headers_mut().insert(header::CONTENT_TYPE, HeaderValue::from_static("text/plain; charset=utf-8"));
    resp
}

fn with_cors(mut resp: ProxyResponse) -> ProxyResponse {
    let h = resp.headers_mut();
    h.insert(header::ACCESS_CONTROL_ALLOW_ORIGIN, HeaderValue::from_static("*"));
    h.insert(header::ACCESS_CONTROL_ALLOW_METHODS, HeaderValue::from_static("POST, OPTIONS"));
    h.insert(header::ACCESS_CONTROL_ALLOW_HEADERS, HeaderValue::from_static("content-type"));
    h.insert(header::ACCESS_CONTROL_MAX_AGE, HeaderValue::from_static("86400"));
    resp
}

/// Absolute URL a request targets, with the scheme's default port dropped.
pub fn target_url<B>(req: &Request<B>, ctx: &RequestContext) -> Option<String> {
    let uri = req.uri();
    let (scheme, authority) = match (uri.scheme_str(), uri.authority()) {
        (Some(s), Some(a)) => (s.to_ascii_lowercase(), a.as_str().to_string()),
        _ => {
            let host = req
                .headers()
                .get(header::HOST)
                .and_then(|h| h.to_str().ok())
                .map(str::to_string)
                .or_else(|| ctx.authority.clone())?;
            (if ctx.tls { "https" } else { "http" }.to_string(), host)
        }
    };
    let mut authority = authority.to_ascii_lowercase();
    let default_port = if scheme == "https" { ":443" } else { ":80" };
    if let Some(stripped) = authority.strip_suffix(default_port) {
        authority = stripped.to_string();
    }
    let path = uri.path_and_query().map_or("/", |p| p.as_str());
    Some(format!("{scheme}://{authority}{path}"))
}

/// The encoding to send: the origin's own if the client accepts it, else
/// gzip, else brotli, else identity.
pub fn negotiate(accept: Option<&str>, preferred: ContentEncoding) -> ContentEncoding {
    let accepted = |enc: ContentEncoding| {
        accept.is_some_and(|a| {
            a.split(',').any(|item| {
                let mut parts = item.split(';');
                let token = parts.next().unwrap_or("").trim();
                let q_zero = parts.any(|p| {
                    p.trim().strip_prefix("q=").and_then(|q| q.trim().parse::<f32>().ok()) == Some(0.0)
                });
                !q_zero && (token.eq_ignore_ascii_case(enc.token()) || token == "*")
            })
        })
    };
    if preferred != ContentEncoding::Identity && accepted(preferred) {
        preferred
    } else if accepted(ContentEncoding::Gzip) {
        ContentEncoding::Gzip
    } else if accepted(ContentEncoding::Brotli) {
        ContentEncoding::Brotli
    } else {
        ContentEncoding::Identity
    }
}

impl Proxy {
    pub fn new(config: ProxyConfig, store: Arc<CoverageStore>, resources: ResourceCache) -> Self {
        Self { config, store, resources }
    }

    /// Proxy with a disk cache at `cache_dir` and a fresh origin client.
    pub fn open(config: ProxyConfig, store: Arc<CoverageStore>, cache_dir: &std::path::Path) -> Result<Self, crate::Error> {
        let origin = OriginClient::new(config.origin_timeout, &config.origin_roots)?;
        let resources = ResourceCache::new(DiskCache::open(cache_dir)?, origin)?;
        Ok(Self::new(config, store, resources))
    }

    pub fn config(&self) -> &ProxyConfig {
        &self.config
    }

    pub fn store(&self) -> &Arc<CoverageStore> {
        &self.store
    }

    pub fn resources(&self) -> &ResourceCache {
        &self.resources
    }

    pub async fn handle(&self, req: Request<Bytes>, ctx: &RequestContext) -> ProxyResponse {
        let path = req.uri().path();
        if path == BEACON_PATH {
            return with_cors(self.beacon(req).await);
        }
        if let Some(rest) = path.strip_prefix(SIDECAR_PREFIX) {
            let rest = rest.to_string();
            return self.sidecar(&rest);
        }
        let Some(url) = target_url(&req, ctx) else {
            return text(StatusCode::BAD_REQUEST, "request has no host");
        };
        match *req.method() {
            Method::GET | Method::HEAD => self.resource(req, &url).await,
            _ => self.pass_through(req, &url).await,
        }
    }

    async fn beacon(&self, req: Request<Bytes>) -> ProxyResponse {
        match *req.method() {
            Method::OPTIONS => return text(StatusCode::NO_CONTENT, ""),
            Method::POST => {}
            _ => return text(StatusCode::METHOD_NOT_ALLOWED, "beacons are POSTed"),
        }
        let beacon = match CoverageBeacon::from_json(req.body(), now_ms()) {
            Ok(b) => b,
            Err(e) => {
                tracing::debug!(error = %e, "rejected beacon");
                return text(StatusCode::BAD_REQUEST, e.to_string());
            }
        };
        let store = self.store.clone();
        let recorded = tokio::task::spawn_blocking(move || store.record_beacon(&beacon)).await;
        match recorded {
            Ok(Ok(record)) => {
                tracing::info!(key = %record.key, beacons = record.beacon_count, executed = record.executed.len(), "beacon recorded");
                let mut resp = text(StatusCode::NO_CONTENT, "");
                resp.headers_mut().remove(header::CONTENT_TYPE);
                resp
            }
            Ok(Err(e @ (StoreError::MalformedBeacon(_) | StoreError::UnsupportedVersion(_)))) => {
                text(StatusCode::BAD_REQUEST, e.to_string())
            }
            Ok(Err(e)) => {
                tracing::error!(error = %e, "could not persist beacon");
                text(StatusCode::INTERNAL_SERVER_ERROR, "coverage store write failed")
            }
            Err(e) => text(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        }
    }

    fn sidecar(&self, rest: &str) -> ProxyResponse {
        let not_found = || text(StatusCode::NOT_FOUND, "unknown sidecar");
        let Some((hash, id)) = rest.split_once('/') else {
            return not_found();
        };
        let Some(id) = FunctionId::parse(id) else {
            return not_found();
        };
        let resource = match self.resources.by_hash(hash) {
            Ok(Some(r)) => r,
            Ok(None) | Err(jselide_core::cache::CacheError::BadHash(_)) => return not_found(),
            Err(e) => {
                tracing::error!(error = %e, "cache read failed");
                return text(StatusCode::INTERNAL_SERVER_ERROR, "cache read failed");
            }
        };
        let Some((source, analysis)) = resource.transformable() else {
            return not_found();
        };
        let Some(unit) = analysis.unit(&id) else {
            return not_found();
        };
        let body = sidecar_for(source, unit, &self.config.templates);
        let mut resp = Response::new(Full::new(Bytes::from(body)));
        let h = resp.headers_mut();
        h.insert(header::CONTENT_TYPE, HeaderValue::from_static("application/javascript; charset=utf-8"));
        h.insert(header::CACHE_CONTROL, HeaderValue::from_static("no-store"));
        h.insert(header::ACCESS_CONTROL_ALLOW_ORIGIN, HeaderValue::from_static("*"));
        resp
    }

    fn party(&self, url: &str, referer: Option<&str>) -> Party {
        let Some(page_host) = referer.and_then(url_host) else {
            return Party::First;
        };
        let Some(host) = url_host(url) else {
            return Party::Third;
        };
        self.config.party.classify(host, page_host).unwrap_or_else(|e| {
            tracing::debug!(error = %e, "unclassifiable host treated as third party");
            Party::Third
        })
    }

    /// Picks and builds the body to serve. Any transform failure falls back
    /// to the original bytes.
    pub async fn select(&self, resource: &CachedResource, referer: Option<&str>) -> (ServedVariant, Bytes) {
        let original = (ServedVariant::Original, resource.body.clone());
        if self.config.mode == ServeMode::Original || resource.meta.status != 200 || resource.transformable().is_none() {
            return original;
        }
        let key = resource.key();
        let learning = match self.config.mode {
            ServeMode::Auto => self.store.phase(key, &self.config.phase) == ResourcePhase::Learning,
            _ => self.store.record(key).is_none(),
        };
        let t = &self.config.templates;
        if learning {
            return match self.resources.instrumented(resource, t).await {
                Some(body) => (ServedVariant::Instrumented, body),
                None => original,
            };
        }
        if !self.config.elide_third_party && self.party(&key.url, referer) == Party::Third {
            return original;
        }
        let executed = self.store.executed_ids(key);
        match self.resources.elided(resource, &executed, &self.config.policy, t).await {
            Some(v) => (ServedVariant::Elided, v.body),
            None => original,
        }
    }

    async fn resource(&self, req: Request<Bytes>, url: &str) -> ProxyResponse {
        let resource = match self.resources.get(url, req.headers()).await {
            Ok(r) => r,
            Err(e) => return origin_failure(url, &e),
        };
        let referer = req.headers().get(header::REFERER).and_then(|v| v.to_str().ok());
        let (variant, body) = self.select(&resource, referer).await;
        let accept = req.headers().get(header::ACCEPT_ENCODING).and_then(|v| v.to_str().ok());
        let head = req.method() == Method::HEAD;
        build_response(&resource, variant, body, accept, head)
    }

    async fn pass_through(&self, req: Request<Bytes>, url: &str) -> ProxyResponse {
        let (parts, body) = req.into_parts();
        let resp = match self.resources.origin().fetch(parts.method, url, &parts.headers, body).await {
            Ok(r) => r,
            Err(e) => return origin_failure(url, &ResourceError::Origin(e)),
        };
        let mut out = Response::new(Full::new(resp.body.clone()));
        *out.status_mut() = StatusCode::from_u16(resp.status).unwrap_or(StatusCode::BAD_GATEWAY);
        copy_headers(&mut out, &resp.headers, &[]);
        set_length(&mut out, resp.body.len());
        out
    }
}

fn origin_failure(url: &str, e: &ResourceError) -> ProxyResponse {
    match e {
        ResourceError::Origin(OriginError::ServerError { status, .. }) => {
            tracing::warn!(%url, status, "origin server error");
        }
        other => tracing::warn!(%url, error = %other, "origin fetch failed"),
    }
    text(StatusCode::BAD_GATEWAY, e.to_string())
}

fn copy_headers(resp: &mut ProxyResponse, headers: &[(String, String)], skip: &[&str]) {
    let h = resp.headers_mut();
    for (name, value) in headers {
        let n = name.as_str();
        if is_hop_by_hop(n) || n == "content-length" || skip.contains(&n) {
            continue;
        }
        if let (Ok(name), Ok(value)) = (HeaderName::from_bytes(n.as_bytes()), HeaderValue::from_str(value)) {
            h.append(name, value);
        }
    }
}

fn set_length(resp: &mut ProxyResponse, len: usize) {
    resp.headers_mut().insert(header::CONTENT_LENGTH, HeaderValue::from(len));
}

fn build_response(
    resource: &CachedResource,
    variant: ServedVariant,
    body: Bytes,
    accept: Option<&str>,
    head: bool,
) -> ProxyResponse {
    let status = StatusCode::from_u16(resource.meta.status).unwrap_or(StatusCode::OK);
    let transformed = variant != ServedVariant::Original;

    let (encoded, encoding_header) = if resource.meta.opaque {
        (body, None)
    } else {
        let enc = negotiate(accept, resource.meta.original_encoding);
        let encoded = match enc {
            ContentEncoding::Identity => body,
            e => Bytes::from(transcode(&body, e)),
        };
        (encoded, Some(enc))
    };

    let mut skip = vec!["x-jselide-variant"];
    if encoding_header.is_some() {
        skip.push("content-encoding");
    }
    if transformed {
        skip.extend(["etag", "last-modified", "cache-control", "content-md5", "digest"]);
    }
    let len = encoded.len();
    let mut resp = Response::new(Full::new(if head { Bytes::new() } else { encoded }));
    *resp.status_mut() = status;
    copy_headers(&mut resp, &resource.meta.headers, &skip);
    let h = resp.headers_mut();
    if let Some(enc) = encoding_header.filter(|e| *e != ContentEncoding::Identity) {
        h.insert(header::CONTENT_ENCODING, HeaderValue::from_static(enc.token()));
    }
    if encoding_header.is_some() {
        h.append(header::VARY, HeaderValue::from_static("accept-encoding"));
    }
    if transformed {
        h.insert(header::CACHE_CONTROL, HeaderValue::from_static("no-cache"));
    }
    h.insert(VARIANT_HEADER, HeaderValue::from_static(variant.as_str()));
    set_length(&mut resp, len);
    resp
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn urls_from_origin_and_absolute_form() {
        let req = Request::get("/a.js?x=1").header("host", "Example.com:443").body(()).unwrap();
        assert_eq!(target_url(&req, &RequestContext::tunnel("example.com:443", true)).unwrap(), "https://example.com/a.js?x=1");
        let req = Request::get("http://example.com:8080/a.js").body(()).unwrap();
        assert_eq!(target_url(&req, &RequestContext::plain()).unwrap(), "http://example.com:8080/a.js");
        let req = Request::get("/a.js").body(()).unwrap();
        assert_eq!(target_url(&req, &RequestContext::tunnel("x.test:443", true)).unwrap(), "https://x.test/a.js");
        assert!(target_url(&Request::get("/").body(()).unwrap(), &RequestContext::plain()).is_none());
    }

    #[test]
    fn encoding_negotiation() {
        use ContentEncoding::*;
        assert_eq!(negotiate(Some("gzip, br"), Brotli), Brotli);
        assert_eq!(negotiate(Some("gzip"), Brotli), Gzip);
        assert_eq!(negotiate(Some("br;q=0, gzip;q=0"), Brotli), Identity);
        assert_eq!(negotiate(None, Gzip), Identity);
        assert_eq!(negotiate(Some("gzip"), Identity), Gzip);
        assert_eq!(negotiate(Some("*"), Brotli), Brotli);
    }
}
