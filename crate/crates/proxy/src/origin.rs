//! Requests to the real servers behind the proxy.

use std::time::Duration;

use bytes::Bytes;
use http::{HeaderMap, Method};

#[derive(Debug, thiserror::Error)]
pub enum OriginError {
    #[error("origin unreachable for {url}: {reason}")]
    Unreachable { url: String, reason: String },
    #[error("origin returned {status} for {url}")]
    ServerError { url: String, status: u16 },
}

#[derive(Debug, Clone)]
pub struct OriginResponse {
    pub status: u16,
    /// In arrival order, names lowercase.
    pub headers: Vec<(String, String)>,
    /// Exactly as received; content encoding is not undone.
    pub body: Bytes,
}

impl OriginResponse {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_str())
    }
}

/// Connection-scoped headers that must not be forwarded.
pub const HOP_BY_HOP: &[&str] = &[
    "connection",
    "keep-alive",
    "proxy-authenticate",
    "proxy-authorization",
    "proxy-connection",
    "te",
    "trailer",
    "transfer-encoding",
    "upgrade",
];

pub fn is_hop_by_hop(name: &str) -> bool {
    HOP_BY_HOP.contains(&name)
}

#[derive(Debug, Clone)]
pub struct OriginClient {
    client: reqwest::Client,
}

impl OriginClient {
    /// Redirects are returned to the client rather than followed, and any
    /// system proxy settings are ignored. `extra_roots` are PEM certificates
    /// trusted in addition to the platform roots.
    pub fn new(timeout: Duration, extra_roots: &[String]) -> Result<Self, reqwest::Error> {
        let roots = extra_roots
            .iter()
            .map(|pem| reqwest::Certificate::from_pem_bundle(pem.as_bytes()))
            .collect::<Result<Vec<_>, _>>()?;
        let client = reqwest::Client::builder()
            .redirect(reqwest::redirect::Policy::none())
            .no_proxy()
            .timeout(timeout)
            .tls_certs_merge(roots.into_iter().flatten())
            .build()?;
        Ok(Self { client })
    }

    /// Forwards one request. `headers` are the client's; hop-by-hop headers,
    /// `host` and `content-length` are dropped, and `accept-encoding` is
    /// replaced by the encodings the proxy can undo.
    pub async fn fetch(&self, method: Method, url: &str, headers: &HeaderMap, body: Bytes) -> Result<OriginResponse, OriginError> {
        let unreachable = |e: reqwest::Error| OriginError::Unreachable { url: url.to_string(), reason: e.to_string() };
        let mut req = self.client.request(method, url);
        for (name, value) in headers {
            let n = name.as_str();
            if is_hop_by_hop(n) || matches!(n, "host" | "content-length" | "accept-encoding") {
                continue;
            }
            req = req.header(name, value);
        }
        req = req.header(http::header::ACCEPT_ENCODING, "gzip, br");
        if !body.is_empty() {
            req = req.body(body);
        }
        let resp = req.send().await.map_err(unreachable)?;
        let status = resp.status().as_u16();
        if status >= 500 {
            return Err(OriginError::ServerError { url: url.to_string(), status });
        }
        let headers = resp
            .headers()
            .iter()
            .filter_map(|(n, v)| Some((n.as_str().to_string(), v.to_str().ok()?.to_string())))
            .collect();
        let body = resp.bytes().await.map_err(unreachable)?;
        Ok(OriginResponse { status, headers, body })
    }
}
