//! Learn which JavaScript functions run during real page loads, then serve
//! copies of each script with the never-executed function bodies replaced by
//! small stubs that fetch the original body on demand.
//!
//! The crate is split along the data flow:
//!
//! * [`analyzer`] parses a script and enumerates every function-like unit with
//!   byte-exact spans and a stable [`FunctionId`].
//! * [`transform`] produces the instrumented (learning) and elided variants of
//!   a script, and elides unused CSS rules from coverage ranges.
//! * [`runtime`] holds the browser-side snippets the transformer splices in.
//! * [`store`] accumulates coverage beacons per resource and decides when a
//!   resource leaves the learning phase.
//! * [`cache`] is the on-disk layout shared with the proxy.
//! * [`report`] turns store and cache state into superfluous-code statistics.
//!
//! [`party`] and [`codec`] are small helpers used by both the proxy and the
//! reporter.

pub mod analyzer;
pub mod cache;
pub mod codec;
pub mod key;
pub mod party;
pub mod report;
pub mod runtime;
pub mod store;
pub mod transform;

pub use analyzer::{analyze, function_id, FunctionId, FunctionKind, FunctionUnit, ResourceAnalysis, SourceSpan};
pub use key::ResourceKey;
pub use store::{CoverageBeacon, CoverageRecord, CoverageStore, PhasePolicy, ResourcePhase};
pub use transform::{elide, elide_css, instrument, ElisionPolicy, ElisionResult, ElisionStats, InstrumentedResource};
