use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use jselide_core::party::PartyConfig;
use jselide_core::runtime::RuntimeTemplates;
use jselide_core::{ElisionPolicy, PhasePolicy};

/// Which variant of a script the proxy serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ServeMode {
    /// Always the origin bytes.
    Original,
    /// Instrumented while learning, elided afterwards.
    #[default]
    Auto,
    /// Elided whenever any coverage exists, regardless of phase.
    ForcedElided,
}

impl ServeMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ServeMode::Original => "original",
            ServeMode::Auto => "auto",
            ServeMode::ForcedElided => "forced-elided",
        }
    }
}

impl fmt::Display for ServeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ServeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "original" => Ok(ServeMode::Original),
            "auto" => Ok(ServeMode::Auto),
            "forced-elided" => Ok(ServeMode::ForcedElided),
            _ => Err(format!("unknown mode {s:?} (expected original, auto or forced-elided)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProxyConfig {
    pub mode: ServeMode,
    pub phase: PhasePolicy,
    pub party: PartyConfig,
    /// Also elide scripts classified as third party. Off by default: third
    /// party scripts are instrumented while learning and then served as-is.
    pub elide_third_party: bool,
    pub policy: ElisionPolicy,
    pub templates: RuntimeTemplates,
    pub origin_timeout: Duration,
    /// PEM certificates trusted for origin connections on top of the
    /// platform roots.
    pub origin_roots: Vec<String>,
}

impl Default for ProxyConfig {
    fn default() -> Self {
        Self {
            mode: ServeMode::Auto,
            phase: PhasePolicy::default(),
            party: PartyConfig::default(),
            elide_third_party: false,
            policy: ElisionPolicy::default(),
            templates: RuntimeTemplates::default(),
            origin_timeout: Duration::from_secs(30),
            origin_roots: Vec::new(),
        }
    }
}
