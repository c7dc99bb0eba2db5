#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};
use std::convert::Infallible;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use bytes::Bytes;
use http::{Request, Response, StatusCode};
use http_body_util::Full;
use hyper::body::Incoming;
use hyper::service::service_fn;
use hyper_util::rt::TokioIo;
use jselide_core::codec::{transcode, ContentEncoding};
use jselide_core::{analyze, CoverageStore, FunctionId, ResourceKey};
use jselide_proxy::{CertificateAuthority, Proxy, ProxyConfig, Server};
use tokio::net::TcpListener;
use tokio::sync::oneshot;

pub const SCRIPTS: [&str; 5] = ["vendor.js", "cart.js", "search.js", "analytics.js", "app.js"];

pub fn site_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/site")
}

pub fn site_file(name: &str) -> String {
    std::fs::read_to_string(site_dir().join(name)).unwrap()
}

#[derive(Clone)]
pub struct Route {
    pub status: u16,
    pub content_type: &'static str,
    pub body: Bytes,
    pub encoding: Option<&'static str>,
}

impl Route {
    pub fn js(body: impl Into<Bytes>) -> Self {
        Self { status: 200, content_type: "application/javascript", body: body.into(), encoding: None }
    }

    pub fn html(body: impl Into<Bytes>) -> Self {
        Self { status: 200, content_type: "text/html; charset=utf-8", body: body.into(), encoding: None }
    }

    /// Sent with `content-encoding: gzip`.
    pub fn gzip(mut self) -> Self {
        self.body = Bytes::from(transcode(&self.body, ContentEncoding::Gzip));
        self.encoding = Some("gzip");
        self
    }

    pub fn status(mut self, status: u16) -> Self {
        self.status = status;
        self
    }
}

/// Local origin server with a per-path hit counter.
pub struct TestOrigin {
    pub addr: SocketAddr,
    routes: Arc<Mutex<HashMap<String, Route>>>,
    hits: Arc<Mutex<HashMap<String, u64>>>,
    _stop: oneshot::Sender<()>,
}

impl TestOrigin {
    pub async fn start(routes: impl IntoIterator<Item = (String, Route)>) -> Self {
        let routes = Arc::new(Mutex::new(routes.into_iter().collect::<HashMap<_, _>>()));
        let hits = Arc::new(Mutex::new(HashMap::new()));
        let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        let (stop, mut stopped) = oneshot::channel::<()>();
        let (r, h) = (routes.clone(), hits.clone());
        tokio::spawn(async move {
            loop {
                let (stream, _) = tokio::select! {
                    _ = &mut stopped => return,
                    a = listener.accept() => a.unwrap(),
                };
                let (r, h) = (r.clone(), h.clone());
                tokio::spawn(async move {
                    let svc = service_fn(move |req: Request<Incoming>| {
                        let path = req.uri().path().to_string();
                        *h.lock().unwrap().entry(path.clone()).or_insert(0) += 1;
                        let route = r.lock().unwrap().get(&path).cloned();
                        async move {
                            let resp = match route {
                                Some(route) => {
                                    let mut b = Response::builder()
                                        .status(route.status)
                                        .header("content-type", route.content_type)
                                        .header("etag", "\"origin-etag\"")
                                        .header("cache-control", "max-age=3600");
                                    if let Some(enc) = route.encoding {
                                        b = b.header("content-encoding", enc);
                                    }
                                    b.body(Full::new(route.body)).unwrap()
                                }
                                None => Response::builder().status(StatusCode::NOT_FOUND).body(Full::new(Bytes::from("missing"))).unwrap(),
                            };
                            Ok::<_, Infallible>(resp)
                        }
                    });
                    let _ = hyper::server::conn::http1::Builder::new().serve_connection(TokioIo::new(stream), svc).await;
                });
            }
        });
        Self { addr, routes, hits, _stop: stop }
    }

    /// The fixture shop: `/index.html` and five scripts under `/js/`, with
    /// `cart.js` and `search.js` gzip encoded.
    pub async fn shop() -> Self {
        let mut routes = vec![("/index.html".to_string(), Route::html(site_file("index.html")))];
        for name in SCRIPTS {
            let route = Route::js(site_file(name));
            let route = if matches!(name, "cart.js" | "search.js") { route.gzip() } else { route };
            routes.push((format!("/js/{name}"), route));
        }
        Self::start(routes).await
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.addr)
    }

    pub fn set(&self, path: &str, route: Route) {
        self.routes.lock().unwrap().insert(path.to_string(), route);
    }

    pub fn hits(&self, path: &str) -> u64 {
        self.hits.lock().unwrap().get(path).copied().unwrap_or(0)
    }
}

pub struct TestProxy {
    pub addr: SocketAddr,
    pub proxy: Arc<Proxy>,
    pub dir: tempfile::TempDir,
    _stop: oneshot::Sender<()>,
}

impl TestProxy {
    pub async fn start(config: ProxyConfig) -> Self {
        Self::start_with(config, None).await
    }

    pub async fn start_with(config: ProxyConfig, ca: Option<Arc<CertificateAuthority>>) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let store = Arc::new(CoverageStore::open(dir.path().join("store.log")).unwrap());
        let proxy = Arc::new(Proxy::open(config, store, &dir.path().join("cache")).unwrap());
        let server = Server::new(proxy.clone(), ca).unwrap();
        let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        let (stop, stopped) = oneshot::channel::<()>();
        tokio::spawn(server.run(listener, async move {
            let _ = stopped.await;
        }));
        Self { addr, proxy, dir, _stop: stop }
    }

    pub fn store_path(&self) -> PathBuf {
        self.dir.path().join("store.log")
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.dir.path().join("cache")
    }

    /// A client that sends every request through this proxy.
    pub fn client(&self) -> reqwest::Client {
        reqwest::Client::builder()
            .proxy(reqwest::Proxy::all(format!("http://{}", self.addr)).unwrap())
            .build()
            .unwrap()
    }
}

pub struct Fetched {
    pub status: u16,
    pub variant: Option<String>,
    pub encoding: Option<String>,
    pub headers: reqwest::header::HeaderMap,
    /// Decoded per `content-encoding`.
    pub body: Vec<u8>,
}

impl Fetched {
    pub fn text(&self) -> &str {
        std::str::from_utf8(&self.body).unwrap()
    }
}

pub async fn get(client: &reqwest::Client, url: &str, referer: Option<&str>, accept_encoding: &str) -> Fetched {
    let mut req = client.get(url).header("accept-encoding", accept_encoding);
    if let Some(r) = referer {
        req = req.header("referer", r);
    }
    let resp = req.send().await.unwrap();
    let status = resp.status().as_u16();
    let headers = resp.headers().clone();
    let h = |n: &str| headers.get(n).and_then(|v| v.to_str().ok()).map(str::to_string);
    let (variant, encoding) = (h("x-jselide-variant"), h("content-encoding"));
    let raw = resp.bytes().await.unwrap();
    let enc = ContentEncoding::from_header(encoding.as_deref()).unwrap();
    let body = jselide_core::codec::decode(&raw, enc).unwrap();
    if let Some(len) = h("content-length") {
        assert_eq!(len.parse::<usize>().unwrap(), raw.len(), "content-length of {url}");
    }
    Fetched { status, variant, encoding, headers, body }
}

/// Source snippets that one scripted page load executes, per fixture. Each
/// marks the innermost unit whose body contains it.
pub fn boot_path(script: &str) -> &'static [&'static str] {
    match script {
        "vendor.js" => &["function each(", "var sign = cents"],
        "cart.js" => &["var items = []", "items.push({ sku", "var sum = 0", "sum += (prices"],
        "search.js" => &[
            "this.index = docs.map",
            "({ id: i, words",
            "return this.index.filter(",
            "terms.every(",
            "e.words.includes(t))",
            "map((e) => e.id)",
        ],
        "analytics.js" => &["this.queue.push({ name"],
        "app.js" => &["Cart.add(\"sku-1\""],
        _ => &[],
    }
}

/// What one simulated page load executes in `source`: the units marked by
/// [`boot_path`] plus `extra` snippets for this load only.
pub fn simulated_execution(url: &str, source: &str, script: &str, extra: &[&str]) -> (ResourceKey, BTreeSet<FunctionId>) {
    let key = ResourceKey::new(url, source.as_bytes());
    let analysis = analyze(source, &key).unwrap();
    let executed = boot_path(script)
        .iter()
        .chain(extra)
        .map(|snippet| {
            let at = source.find(snippet).unwrap_or_else(|| panic!("{script}: snippet {snippet:?} not found"));
            analysis
                .units
                .iter()
                .filter(|u| u.body_span.contains_offset(at))
                .max_by_key(|u| u.depth)
                .unwrap_or_else(|| panic!("{script}: {snippet:?} is not inside a function"))
                .id
                .clone()
        })
        .collect();
    (key, executed)
}

pub fn beacon_json(key: &ResourceKey, ids: &BTreeSet<FunctionId>, page: &str) -> String {
    serde_json::json!({
        "v": 1,
        "key": { "url": key.url, "hash": key.content_hash },
        "ids": ids.iter().map(FunctionId::as_str).collect::<Vec<_>>(),
        "page": page,
    })
    .to_string()
}

pub async fn post_beacon(client: &reqwest::Client, origin: &TestOrigin, body: String) -> u16 {
    client
        .post(origin.url("/__jscov__/beacon"))
        .header("content-type", "text/plain;charset=UTF-8")
        .body(body)
        .send()
        .await
        .unwrap()
        .status()
        .as_u16()
}

/// One scripted page load: fetch the page and its scripts through the proxy
/// and post one beacon per instrumented script. Returns the scripts as served.
pub async fn load_cycle(client: &reqwest::Client, origin: &TestOrigin, extra: &[&str]) -> Vec<(String, Fetched)> {
    let page = origin.url("/index.html");
    let html = get(client, &page, None, "gzip, br").await;
    assert_eq!(html.status, 200);
    let mut served = Vec::new();
    for name in SCRIPTS {
        let url = origin.url(&format!("/js/{name}"));
        let f = get(client, &url, Some(&page), "gzip, br").await;
        assert_eq!(f.status, 200, "{url}");
        if f.variant.as_deref() == Some("instrumented") {
            let (key, ids) = simulated_execution(&url, &site_file(name), name, extra);
            for id in &ids {
                assert!(f.text().contains(&format!("\"{id}\"")), "{name}: marker for {id}");
            }
            assert_eq!(post_beacon(client, origin, beacon_json(&key, &ids, &page)).await, 204);
        }
        served.push((name.to_string(), f));
    }
    served
}

pub fn path_of(p: &Path) -> String {
    p.display().to_string()
}
