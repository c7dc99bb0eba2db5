//! Runs a small origin and the proxy in-process, loads the page five times
//! while posting beacons, then shows the sixth load served elided and fetches
//! one sidecar.
//!
//! `cargo run -p jselide-proxy --example learning_loop`

use std::convert::Infallible;
use std::path::PathBuf;
use std::sync::Arc;

use bytes::Bytes;
use http::{Request, Response};
use http_body_util::Full;
use hyper::body::Incoming;
use hyper::service::service_fn;
use hyper_util::rt::TokioIo;
use jselide_core::{analyze, CoverageBeacon, CoverageStore, ResourceKey};
use jselide_proxy::{Proxy, ProxyConfig, Server, ServeMode, BEACON_PATH, VARIANT_HEADER};
use tokio::net::TcpListener;

const SCRIPTS: [&str; 3] = ["cart.js", "search.js", "app.js"];

fn site() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/site")
}

/// Serves `tests/site` over plain HTTP.
async fn origin() -> std::io::Result<String> {
    let listener = TcpListener::bind("127.0.0.1:0").await?;
    let addr = listener.local_addr()?;
    tokio::spawn(async move {
        while let Ok((stream, _)) = listener.accept().await {
            let svc = service_fn(|req: Request<Incoming>| async move {
                let name = req.uri().path().rsplit('/').next().unwrap_or_default().to_string();
                let resp = match std::fs::read(site().join(&name)) {
                    Ok(body) => Response::builder()
                        .header("content-type", if name.ends_with(".js") { "text/javascript" } else { "text/html" })
                        .body(Full::new(Bytes::from(body))),
                    Err(_) => Response::builder().status(404).body(Full::new(Bytes::new())),
                };
                Ok::<_, Infallible>(resp.unwrap())
            });
            tokio::spawn(hyper::server::conn::http1::Builder::new().serve_connection(TokioIo::new(stream), svc));
        }
    });
    Ok(format!("http://{addr}"))
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let origin = origin().await?;
    let dir = tempfile::tempdir()?;
    let store = Arc::new(CoverageStore::open(dir.path().join("coverage.log"))?);
    let config = ProxyConfig { mode: ServeMode::Auto, ..ProxyConfig::default() };
    let proxy = Arc::new(Proxy::open(config, store, &dir.path().join("cache"))?);
    let listener = TcpListener::bind("127.0.0.1:0").await?;
    let proxy_addr = listener.local_addr()?;
    tokio::spawn(Server::new(proxy, None)?.run(listener, std::future::pending()));

    let client = reqwest::Client::builder().proxy(reqwest::Proxy::all(format!("http://{proxy_addr}"))?).build()?;
    let page = format!("{origin}/index.html");

    for load in 1..=6 {
        let mut line = Vec::new();
        for name in SCRIPTS {
            let url = format!("{origin}/js/{name}");
            let resp = client.get(&url).header("referer", &page).send().await?;
            let variant = resp.headers()[VARIANT_HEADER].to_str()?.to_string();
            let body = resp.text().await?;
            line.push(format!("{name} {variant} {}B", body.len()));

            if variant == "instrumented" {
                // A browser would run the script and its prologue would post
                // this. Here only the top-level units count as executed.
                let original = std::fs::read_to_string(site().join(name))?;
                let key = ResourceKey::new(&url, original.as_bytes());
                let ids = analyze(&original, &key)?.units.into_iter().filter(|u| u.depth == 0).map(|u| u.id).collect();
                let beacon = CoverageBeacon { version: 1, key, ids, page_url: Some(page.clone()), received_at: 0 };
                let status = client.post(format!("{origin}{BEACON_PATH}")).body(beacon.to_json()).send().await?.status();
                assert_eq!(status, 204);
            } else if let Some(at) = body.find("\"/__jscov__/body/") {
                let path = &body[at + 1..];
                let path = &path[..path.find('"').unwrap()];
                let sidecar = client.get(format!("{origin}{path}")).send().await?.text().await?;
                println!("sidecar {path}:\n{}\n", sidecar.lines().take(3).collect::<Vec<_>>().join("\n"));
            }
        }
        println!("load {load}: {}", line.join(", "));
    }
    Ok(())
}
