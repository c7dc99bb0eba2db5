//! Intercepting HTTP(S) proxy for JavaScript elision.
//!
//! Every script passing through is fetched from its origin once and cached.
//! While a script is learning, clients get an instrumented copy whose beacon
//! is posted back to the proxy at `/__jscov__/beacon`. Once enough beacons
//! have arrived, clients get the elided copy, and any stub that does run
//! fetches its original body from `/__jscov__/body/<content_hash>/<id>`.
//!
//! [`Proxy`] is the request handler and [`Server`] the connection layer
//! around it. HTTPS is intercepted with leaf certificates minted by a local
//! [`CertificateAuthority`].

pub mod config;
pub mod origin;
pub mod resources;
pub mod serve;
pub mod server;
pub mod tls;

pub use config::{ProxyConfig, ServeMode};
pub use origin::{OriginClient, OriginError};
pub use resources::{sidecar_base, CachedResource, ResourceCache, BEACON_PATH, SIDECAR_PREFIX};
pub use serve::{Proxy, RequestContext, ServedVariant, VARIANT_HEADER};
pub use server::Server;
pub use tls::{CertificateAuthority, TlsError};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("origin client setup failed: {0}")]
    Client(#[from] reqwest::Error),
    #[error(transparent)]
    Cache(#[from] jselide_core::cache::CacheError),
    #[error(transparent)]
    Store(#[from] jselide_core::store::StoreError),
    #[error(transparent)]
    Tls(#[from] TlsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
