//! Creates (or reuses) the interception CA the proxy signs per-host leaf
//! certificates with, and mints one leaf.
//!
//! `cargo run -p jselide-proxy --example certificate_authority [dir]`
//!
//! Import `<dir>/ca.pem` into the browser's trust store before pointing it at
//! `jselide serve --ca-cert <dir>/ca.pem --ca-key <dir>/ca.key`.

use std::path::PathBuf;

use jselide_proxy::CertificateAuthority;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).map_or_else(std::env::temp_dir, PathBuf::from);
    let (cert, key) = (dir.join("ca.pem"), dir.join("ca.key"));
    let ca = CertificateAuthority::load_or_generate(&cert, &key)?;
    println!("CA certificate: {}", cert.display());
    println!("CA key:         {}", key.display());

    let leaf = ca.leaf("www.shop.test")?;
    println!("minted a leaf for www.shop.test with a chain of {} certificates", leaf.cert.len());
    print!("{}", ca.cert_pem());
    Ok(())
}
