//! Local certificate authority and per-host leaf certificates for TLS
//! interception.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex};

use rcgen::{BasicConstraints, CertificateParams, DnType, ExtendedKeyUsagePurpose, IsCa, Issuer, KeyPair, KeyUsagePurpose};
use rustls::crypto::aws_lc_rs;
use rustls::pki_types::pem::PemObject;
use rustls::pki_types::{CertificateDer, PrivateKeyDer, PrivatePkcs8KeyDer};
use rustls::server::{ClientHello, ResolvesServerCert};
use rustls::sign::CertifiedKey;
use rustls::ServerConfig;

#[derive(Debug, thiserror::Error)]
pub enum TlsError {
    #[error("certificate generation failed: {0}")]
    Rcgen(#[from] rcgen::Error),
    #[error(transparent)]
    Rustls(#[from] rustls::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Host used for leaf certificates when the client sends no SNI.
pub const FALLBACK_HOST: &str = "localhost";

pub struct CertificateAuthority {
    cert_pem: String,
    key_pem: String,
    ca_der: CertificateDer<'static>,
    issuer: Issuer<'static, KeyPair>,
    leaves: Mutex<HashMap<String, Arc<CertifiedKey>>>,
}

impl std::fmt::Debug for CertificateAuthority {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CertificateAuthority").finish_non_exhaustive()
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TlsError + '_ {
    move |source| TlsError::Io { path: path.display().to_string(), source }
}

impl CertificateAuthority {
    /// A fresh self-signed CA.
    pub fn generate() -> Result<Self, TlsError> {
        let key = KeyPair::generate()?;
        let mut params = CertificateParams::new(Vec::<String>::new())?;
        params.is_ca = IsCa::Ca(BasicConstraints::Unconstrained);
        params.distinguished_name.push(DnType::CommonName, "jselide interception CA");
        params.key_usages = vec![KeyUsagePurpose::KeyCertSign, KeyUsagePurpose::CrlSign, KeyUsagePurpose::DigitalSignature];
        let cert = params.self_signed(&key)?;
        let cert_pem = cert.pem();
        let key_pem = key.serialize_pem();
        let ca_der = cert.der().clone();
        Ok(Self { cert_pem, key_pem, ca_der, issuer: Issuer::new(params, key), leaves: Mutex::default() })
    }

    pub fn from_pem(cert_pem: &str, key_pem: &str) -> Result<Self, TlsError> {
        let key = KeyPair::from_pem(key_pem)?;
        let issuer = Issuer::from_ca_cert_pem(cert_pem, key)?;
        let ca_der = CertificateDer::from_pem_slice(cert_pem.as_bytes())
            .map_err(|e| rustls::Error::General(format!("CA certificate PEM: {e}")))?;
        Ok(Self {
            cert_pem: cert_pem.to_string(),
            ca_der,
            key_pem: key_pem.to_string(),
            issuer,
            leaves: Mutex::default(),
        })
    }

    /// Loads the CA from the two files, or generates one and writes them if
    /// the certificate file does not exist yet.
    pub fn load_or_generate(cert_path: &Path, key_path: &Path) -> Result<Self, TlsError> {
        if cert_path.exists() {
            let cert = fs::read_to_string(cert_path).map_err(io_err(cert_path))?;
            let key = fs::read_to_string(key_path).map_err(io_err(key_path))?;
            return Self::from_pem(&cert, &key);
        }
        let ca = Self::generate()?;
        for p in [cert_path, key_path] {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(io_err(dir))?;
            }
        }
        fs::write(cert_path, &ca.cert_pem).map_err(io_err(cert_path))?;
        fs::write(key_path, &ca.key_pem).map_err(io_err(key_path))?;
        tracing::info!(cert = %cert_path.display(), "generated interception CA; clients must trust it or skip verification");
        Ok(ca)
    }

    pub fn cert_pem(&self) -> &str {
        &self.cert_pem
    }

    pub fn key_pem(&self) -> &str {
        &self.key_pem
    }

    /// The leaf for `host`, minted on first use.
    pub fn leaf(&self, host: &str) -> Result<Arc<CertifiedKey>, TlsError> {
        let host = host.to_ascii_lowercase();
        let mut leaves = self.leaves.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(k) = leaves.get(&host) {
            return Ok(k.clone());
        }
        let key = KeyPair::generate()?;
        let mut params = CertificateParams::new(vec![host.clone()])?;
        params.distinguished_name.push(DnType::CommonName, host.as_str());
        params.extended_key_usages = vec![ExtendedKeyUsagePurpose::ServerAuth];
        params.use_authority_key_identifier_extension = true;
        let cert = params.signed_by(&key, &self.issuer)?;
        let der = PrivateKeyDer::Pkcs8(PrivatePkcs8KeyDer::from(key.serialize_der()));
        let signer = aws_lc_rs::sign::any_supported_type(&der)?;
        let certified = Arc::new(CertifiedKey::new(vec![cert.der().clone(), self.ca_der.clone()], signer));
        leaves.insert(host, certified.clone());
        Ok(certified)
    }

    /// Server configuration that mints leaves by SNI.
    pub fn server_config(self: &Arc<Self>) -> Result<Arc<ServerConfig>, TlsError> {
        let mut config = ServerConfig::builder_with_provider(Arc::new(aws_lc_rs::default_provider()))
            .with_safe_default_protocol_versions()?
            .with_no_client_auth()
            .with_cert_resolver(Arc::new(SniResolver { ca: self.clone() }));
        config.alpn_protocols = vec![b"http/1.1".to_vec()];
        Ok(Arc::new(config))
    }
}

#[derive(Debug)]
struct SniResolver {
    ca: Arc<CertificateAuthority>,
}

impl ResolvesServerCert for SniResolver {
    fn resolve(&self, hello: ClientHello<'_>) -> Option<Arc<CertifiedKey>> {
        let host = hello.server_name().unwrap_or(FALLBACK_HOST);
        self.ca
            .leaf(host)
            .inspect_err(|e| tracing::warn!(%host, error = %e, "could not mint leaf certificate"))
            .ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leaves_are_cached_per_host() {
        let ca = CertificateAuthority::generate().unwrap();
        let a = ca.leaf("a.test").unwrap();
        assert!(Arc::ptr_eq(&a, &ca.leaf("A.test").unwrap()));
        assert!(!Arc::ptr_eq(&a, &ca.leaf("b.test").unwrap()));
        assert!(ca.leaf("127.0.0.1").is_ok());
    }

    #[test]
    fn pem_round_trip_and_files() {
        let dir = tempfile::tempdir().unwrap();
        let (c, k) = (dir.path().join("ca/ca.pem"), dir.path().join("ca/ca.key"));
        let first = CertificateAuthority::load_or_generate(&c, &k).unwrap();
        let again = CertificateAuthority::load_or_generate(&c, &k).unwrap();
        assert_eq!(first.cert_pem(), again.cert_pem());
        assert!(again.leaf("x.test").is_ok());
    }
}
