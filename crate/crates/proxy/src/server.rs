//! Connection handling: plain HTTP (origin-form or absolute-form), CONNECT
//! tunnels, and TLS either directly or inside a tunnel.

use std::future::Future;
use std::io;
use std::pin::Pin;
use std::sync::Arc;

use bytes::Bytes;
use http::{Method, Request, Response, StatusCode};
use http_body_util::{BodyExt, Full};
use hyper::body::Incoming;
use hyper::service::service_fn;
use hyper_util::rt::TokioIo;
use tokio::io::{AsyncRead, AsyncWrite};
use tokio::net::{TcpListener, TcpStream};
use tokio_rustls::TlsAcceptor;

use crate::serve::{Proxy, ProxyResponse, RequestContext};
use crate::tls::{CertificateAuthority, TlsError};

const TLS_HANDSHAKE: u8 = 0x16;

pub struct Server {
    proxy: Arc<Proxy>,
    tls: Option<TlsAcceptor>,
}

type BoxFuture = Pin<Box<dyn Future<Output = ()> + Send>>;

impl Server {
    /// Without a CA, CONNECT tunnels are relayed untouched and direct TLS
    /// connections are refused.
    pub fn new(proxy: Arc<Proxy>, ca: Option<Arc<CertificateAuthority>>) -> Result<Arc<Self>, TlsError> {
        let tls = match ca {
            Some(ca) => Some(TlsAcceptor::from(ca.server_config()?)),
            None => None,
        };
        Ok(Arc::new(Self { proxy, tls }))
    }

    pub fn proxy(&self) -> &Arc<Proxy> {
        &self.proxy
    }

    /// Accepts connections until `shutdown` resolves. Connections already
    /// open are left to finish on their own.
    pub async fn run(self: Arc<Self>, listener: TcpListener, shutdown: impl Future<Output = ()>) -> io::Result<()> {
        tokio::pin!(shutdown);
        loop {
            let (stream, peer) = tokio::select! {
                _ = &mut shutdown => return Ok(()),
                accepted = listener.accept() => match accepted {
                    Ok(a) => a,
                    Err(e) => {
                        tracing::warn!(error = %e, "accept failed");
                        continue;
                    }
                },
            };
            let this = self.clone();
            tokio::spawn(async move {
                tracing::trace!(%peer, "connection");
                this.accept(stream).await;
            });
        }
    }

    async fn accept(self: Arc<Self>, stream: TcpStream) {
        let mut first = [0u8; 1];
        match stream.peek(&mut first).await {
            Ok(1) => {}
            _ => return,
        }
        if first[0] != TLS_HANDSHAKE {
            return self.serve_http(stream, RequestContext::plain()).await;
        }
        let Some(acceptor) = self.tls.clone() else {
            tracing::debug!("direct TLS connection refused: no CA configured");
            return;
        };
        match acceptor.accept(stream).await {
            Ok(tls) => self.serve_http(tls, RequestContext { tls: true, authority: None }).await,
            Err(e) => tracing::debug!(error = %e, "TLS handshake failed"),
        }
    }

    fn serve_http<S>(self: Arc<Self>, io: S, ctx: RequestContext) -> BoxFuture
    where
        S: AsyncRead + AsyncWrite + Unpin + Send + 'static,
    {
        Box::pin(async move {
            let this = self.clone();
            let service = service_fn(move |req: Request<Incoming>| {
                let this = this.clone();
                let ctx = ctx.clone();
                async move { Ok::<_, std::convert::Infallible>(this.dispatch(req, ctx).await) }
            });
            let conn = hyper::server::conn::http1::Builder::new()
                .serve_connection(TokioIo::new(io), service)
                .with_upgrades();
            if let Err(e) = conn.await {
                tracing::debug!(error = %e, "connection closed with error");
            }
        })
    }

    async fn dispatch(self: Arc<Self>, req: Request<Incoming>, ctx: RequestContext) -> ProxyResponse {
        if req.method() == Method::CONNECT {
            return self.connect(req);
        }
        let (parts, body) = req.into_parts();
        let body = match body.collect().await {
            Ok(b) => b.to_bytes(),
            Err(e) => {
                tracing::debug!(error = %e, "request body read failed");
                return status(StatusCode::BAD_REQUEST);
            }
        };
        self.proxy.handle(Request::from_parts(parts, body), &ctx).await
    }

    fn connect(self: Arc<Self>, req: Request<Incoming>) -> ProxyResponse {
        let Some(authority) = req.uri().authority().map(|a| a.as_str().to_string()) else {
            return status(StatusCode::BAD_REQUEST);
        };
        tokio::spawn(async move {
            let upgraded = match hyper::upgrade::on(req).await {
                Ok(u) => TokioIo::new(u),
                Err(e) => {
                    tracing::debug!(error = %e, "CONNECT upgrade failed");
                    return;
                }
            };
            match self.tls.clone() {
                Some(acceptor) => match acceptor.accept(upgraded).await {
                    Ok(tls) => self.serve_http(tls, RequestContext::tunnel(authority, true)).await,
                    Err(e) => tracing::debug!(%authority, error = %e, "TLS handshake in tunnel failed"),
                },
                None => tunnel(upgraded, &authority).await,
            }
        });
        status(StatusCode::OK)
    }
}

fn status(code: StatusCode) -> ProxyResponse {
    let mut resp = Response::new(Full::new(Bytes::new()));
    *resp.status_mut() = code;
    resp
}

async fn tunnel<S: AsyncRead + AsyncWrite + Unpin>(mut client: S, authority: &str) {
    let mut upstream = match TcpStream::connect(authority).await {
        Ok(s) => s,
        Err(e) => {
            tracing::warn!(%authority, error = %e, "tunnel connect failed");
            return;
        }
    };
    if let Err(e) = tokio::io::copy_bidirectional(&mut client, &mut upstream).await {
        tracing::debug!(%authority, error = %e, "tunnel closed");
    }
}
