//! Source rewriting: the instrumented variant served while learning, the
//! elided variant served afterwards, and CSS rule elision.
//!
//! Both JS rewrites work on the original origin bytes and the analysis of
//! exactly those bytes. Everything is spliced at byte offsets; text outside
//! the touched regions is copied verbatim.

mod css;
mod elide;
mod instrument;

use thiserror::Error;

use crate::analyzer::{AnalyzeError, ResourceAnalysis};

pub use css::elide_css;
pub use elide::{elide, sidecar_for, ElisionPolicy, ElisionResult, ElisionStats, Replacement, SkipReason};
pub use instrument::{instrument, strip_instrumentation, InstrumentedResource};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransformError {
    #[error("analysis does not belong to this source (expected hash {expected})")]
    AnalysisMismatch { expected: String },
    #[error("resource was not parsed; it must be served unmodified")]
    Unparsed,
    #[error("rewritten output failed to parse: {0}")]
    Reparse(AnalyzeError),
    #[error("invalid range {start}..{end}: {reason}")]
    Range { start: usize, end: usize, reason: &'static str },
}

fn check_analysis(source: &str, analysis: &ResourceAnalysis) -> Result<(), TransformError> {
    if !analysis.parse_ok {
        return Err(TransformError::Unparsed);
    }
    if !analysis.key.matches(source.as_bytes()) || analysis.source_len != source.len() {
        return Err(TransformError::AnalysisMismatch {
            expected: analysis.key.content_hash.clone(),
        });
    }
    Ok(())
}
