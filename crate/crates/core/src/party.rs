//! First/third-party classification by registrable domain.

use std::fmt;
use std::net::IpAddr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Party {
    First,
    Third,
}

impl Party {
    pub fn as_str(self) -> &'static str {
        match self {
            Party::First => "first",
            Party::Third => "third",
        }
    }
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Party {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "first" => Ok(Party::First),
            "third" => Ok(Party::Third),
            _ => Err(format!("unknown party {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid host {0:?}")]
pub struct InvalidHost(pub String);

/// Hosts to treat as first party on top of the registrable-domain rule.
/// `*.example.net` matches `example.net` and every subdomain of it; any other
/// pattern matches that host exactly.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartyConfig {
    pub first_party: Vec<String>,
}

impl PartyConfig {
    pub fn new<S: Into<String>>(patterns: impl IntoIterator<Item = S>) -> Self {
        Self { first_party: patterns.into_iter().map(|p| p.into().to_ascii_lowercase()).collect() }
    }

    pub fn classify(&self, resource_host: &str, page_host: &str) -> Result<Party, InvalidHost> {
        classify_party(resource_host, page_host, &self.first_party)
    }
}

pub fn classify_party(resource_host: &str, page_host: &str, overrides: &[String]) -> Result<Party, InvalidHost> {
    let resource = normalize(resource_host)?;
    let page = normalize(page_host)?;
    if overrides.iter().any(|p| pattern_matches(p, &resource)) {
        return Ok(Party::First);
    }
    if registrable(&resource) == registrable(&page) {
        Ok(Party::First)
    } else {
        Ok(Party::Third)
    }
}

/// Public suffix plus one label, or the host itself for IP literals and names
/// the suffix list does not cover.
pub fn registrable(host: &str) -> &str {
    if host.parse::<IpAddr>().is_ok() {
        return host;
    }
    psl::domain_str(host).unwrap_or(host)
}

/// Host part of an `authority` (`host[:port]`, with IPv6 in brackets).
pub fn host_of(authority: &str) -> &str {
    let authority = authority.rsplit('@').next().unwrap_or(authority);
    if let Some(rest) = authority.strip_prefix('[') {
        return rest.split(']').next().unwrap_or(rest);
    }
    match authority.rsplit_once(':') {
        Some((host, port)) if port.bytes().all(|b| b.is_ascii_digit()) => host,
        _ => authority,
    }
}

/// Host of an absolute `scheme://authority/...` URL.
pub fn url_host(url: &str) -> Option<&str> {
    let rest = url.split_once("://")?.1;
    let end = rest.find(['/', '?', '#']).unwrap_or(rest.len());
    let host = host_of(&rest[..end]);
    (!host.is_empty()).then_some(host)
}

fn normalize(host: &str) -> Result<String, InvalidHost> {
    let h = host.trim().trim_end_matches('.').to_ascii_lowercase();
    if h.parse::<IpAddr>().is_ok() {
        return Ok(h);
    }
    let valid = !h.is_empty()
        && h.len() <= 253
        && h.split('.').all(|label| {
            !label.is_empty()
                && label.len() <= 63
                && !label.starts_with('-')
                && !label.ends_with('-')
                && label.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
        });
    if valid {
        Ok(h)
    } else {
        Err(InvalidHost(host.to_string()))
    }
}

fn pattern_matches(pattern: &str, host: &str) -> bool {
    let pattern = pattern.trim().trim_end_matches('.').to_ascii_lowercase();
    match pattern.strip_prefix("*.") {
        Some(base) => host == base || host.strip_suffix(base).is_some_and(|head| head.ends_with('.')),
        None => host == pattern,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(r: &str, page: &str, o: &[&str]) -> Party {
        let o: Vec<String> = o.iter().map(|s| s.to_string()).collect();
        classify_party(r, page, &o).unwrap()
    }

    #[test]
    fn examples() {
        assert_eq!(p("static.shop.com", "www.shop.com", &[]), Party::First);
        assert_eq!(p("cdn.thirdparty.net", "www.shop.com", &[]), Party::Third);
        assert_eq!(p("assets.shopcdn.net", "www.shop.com", &["*.shopcdn.net"]), Party::First);
    }

    #[test]
    fn public_suffixes_are_respected() {
        assert_eq!(p("a.shop.co.uk", "b.shop.co.uk", &[]), Party::First);
        assert_eq!(p("shop.co.uk", "other.co.uk", &[]), Party::Third);
        assert_eq!(p("alice.github.io", "bob.github.io", &[]), Party::Third);
    }

    #[test]
    fn overrides() {
        assert_eq!(p("shopcdn.net", "www.shop.com", &["*.shopcdn.net"]), Party::First);
        assert_eq!(p("evilshopcdn.net", "www.shop.com", &["*.shopcdn.net"]), Party::Third);
        assert_eq!(p("x.cdn.net", "www.shop.com", &["x.cdn.net"]), Party::First);
        assert_eq!(p("y.x.cdn.net", "www.shop.com", &["x.cdn.net"]), Party::Third);
    }

    #[test]
    fn ip_literals_compare_exactly() {
        assert_eq!(p("127.0.0.1", "127.0.0.1", &[]), Party::First);
        assert_eq!(p("127.0.0.1", "127.0.0.2", &[]), Party::Third);
        assert_eq!(p("localhost", "LOCALHOST", &[]), Party::First);
    }

    #[test]
    fn invalid_hosts() {
        for bad in ["", "a..b", "-a.com", "a b.com", "http://x"] {
            assert!(classify_party(bad, "a.com", &[]).is_err(), "{bad}");
        }
    }

    #[test]
    fn authority_parsing() {
        assert_eq!(host_of("a.test:8080"), "a.test");
        assert_eq!(host_of("a.test"), "a.test");
        assert_eq!(host_of("[::1]:443"), "::1");
        assert_eq!(host_of("u:p@h.test:1"), "h.test");
        assert_eq!(url_host("https://a.test:8443/x.js?y#z"), Some("a.test"));
        assert_eq!(url_host("http://b.test"), Some("b.test"));
        assert_eq!(url_host("/relative"), None);
    }
}
