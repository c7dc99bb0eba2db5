use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::{check_analysis, TransformError};
use crate::analyzer::{check_syntax, FunctionId, FunctionKind, FunctionUnit, ResourceAnalysis, SourceSpan};
use crate::key::ResourceKey;
use crate::runtime::RuntimeTemplates;

/// Which never-executed units may be replaced by stubs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElisionPolicy {
    /// Extra bytes a body must exceed the stub by before it is elided.
    pub min_body_bytes: usize,
    pub skip_kinds: BTreeSet<FunctionKind>,
    pub skip_async: bool,
    pub skip_generators: bool,
    /// Elide even when the stub is not shorter than the body. Off by default:
    /// eliding must never grow a resource.
    pub allow_growth: bool,
}

impl Default for ElisionPolicy {
    fn default() -> Self {
        Self {
            min_body_bytes: 0,
            skip_kinds: [FunctionKind::Getter, FunctionKind::Setter, FunctionKind::Constructor].into(),
            skip_async: true,
            skip_generators: true,
            allow_growth: false,
        }
    }
}

impl ElisionPolicy {
    /// Elides every never-executed unit the stub mechanism can handle,
    /// regardless of kind or size.
    pub fn permissive() -> Self {
        Self {
            min_body_bytes: 0,
            skip_kinds: BTreeSet::new(),
            skip_async: false,
            skip_generators: false,
            allow_growth: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    Kind,
    Async,
    Generator,
    /// Body uses `super` or `new.target`, which a detached wrapper cannot see.
    FrameMeta,
    /// Body is not longer than its stub plus the policy margin.
    TooSmall,
    /// Every candidate together saves less than the loader prologue costs.
    NoNetSaving,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElisionStats {
    pub total_functions: usize,
    pub elided_functions: usize,
    pub skipped_functions: usize,
    pub total_anonymous: usize,
    pub elided_anonymous: usize,
    pub total_bytes: usize,
    pub elided_bytes: usize,
}

/// One body that was swapped for a stub.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Replacement {
    pub id: FunctionId,
    /// The body in the source.
    pub original: SourceSpan,
    /// The stub in the elided output.
    pub output: SourceSpan,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElisionResult {
    pub key: ResourceKey,
    pub body: String,
    /// Directly evaluable wrapper text per elided unit.
    pub sidecars: BTreeMap<FunctionId, String>,
    pub stats: ElisionStats,
    /// In source order.
    pub replacements: Vec<Replacement>,
    /// Never-executed units kept because of the policy.
    pub skipped: Vec<(FunctionId, SkipReason)>,
    /// Location of the loader prologue in `body`; absent when nothing was elided.
    pub prologue_span: Option<SourceSpan>,
}

/// Replaces the body of every never-executed unit with a stub that fetches
/// the original from `sidecar_url_base/<id>` and evaluates it in place.
///
/// Only the outermost of nested never-executed units is elided; the sidecar
/// already carries the nested bodies.
pub fn elide(
    source: &str,
    analysis: &ResourceAnalysis,
    executed: &HashSet<FunctionId>,
    policy: &ElisionPolicy,
    templates: &RuntimeTemplates,
    sidecar_url_base: &str,
) -> Result<ElisionResult, TransformError> {
    check_analysis(source, analysis)?;
    let key = &analysis.key;
    let base = sidecar_url_base.trim_end_matches('/');

    let mut chosen: Vec<(&FunctionUnit, String)> = Vec::new();
    let mut skipped = Vec::new();
    // Bodies of chosen units that may still contain later units. Units nested
    // in a parameter list sit outside the enclosing body, so the stack can
    // hold more than one entry.
    let mut open: Vec<SourceSpan> = Vec::new();
    for unit in &analysis.units {
        while open.last().is_some_and(|b| b.end <= unit.span.start) {
            open.pop();
        }
        if open.last().is_some_and(|b| b.contains(&unit.span)) {
            continue;
        }
        if executed.contains(&unit.id) {
            continue;
        }
        let stub = stub_for(source, unit, templates, key, &format!("{base}/{}", unit.id));
        match skip_reason(unit, policy, stub.len()) {
            Some(reason) => skipped.push((unit.id.clone(), reason)),
            None => {
                open.push(unit.body_span);
                chosen.push((unit, stub));
            }
        }
    }
    chosen.sort_by_key(|(u, _)| u.body_span.start);

    let loader = templates.loader(key);
    if !policy.allow_growth {
        let saved: usize = chosen.iter().map(|(u, stub)| u.body_span.len() - stub.len()).sum();
        if saved <= loader.len() {
            skipped.extend(chosen.drain(..).map(|(u, _)| (u.id.clone(), SkipReason::NoNetSaving)));
            skipped.sort_by_key(|(id, _)| analysis.units.iter().position(|u| &u.id == id));
        }
    }

    let mut stats = ElisionStats {
        total_functions: analysis.units.len(),
        skipped_functions: skipped.len(),
        total_anonymous: analysis.anonymous_count(),
        total_bytes: source.len(),
        ..Default::default()
    };

    if chosen.is_empty() {
        return Ok(ElisionResult {
            key: key.clone(),
            body: source.to_string(),
            sidecars: BTreeMap::new(),
            stats,
            replacements: Vec::new(),
            skipped,
            prologue_span: None,
        });
    }

    let mut body = String::with_capacity(source.len() + loader.len());
    let p = analysis.prologue_offset;
    body.push_str(&source[..p]);
    let prologue_span = SourceSpan::new(body.len(), body.len() + loader.len());
    body.push_str(&loader);

    let mut cursor = p;
    let mut sidecars = BTreeMap::new();
    let mut replacements = Vec::with_capacity(chosen.len());
    for (unit, stub) in chosen {
        debug_assert!(unit.body_span.start >= cursor);
        body.push_str(&source[cursor..unit.body_span.start]);
        let start = body.len();
        body.push_str(&stub);
        cursor = unit.body_span.end;

        stats.elided_functions += 1;
        stats.elided_bytes += unit.body_span.len();
        if unit.is_anonymous {
            stats.elided_anonymous += 1;
        }
        sidecars.insert(unit.id.clone(), sidecar_for(source, unit, templates));
        replacements.push(Replacement {
            id: unit.id.clone(),
            original: unit.body_span,
            output: SourceSpan::new(start, body.len()),
        });
    }
    body.push_str(&source[cursor..]);

    check_syntax(&body, analysis.goal).map_err(TransformError::Reparse)?;

    Ok(ElisionResult {
        key: key.clone(),
        body,
        sidecars,
        stats,
        replacements,
        skipped,
        prologue_span: Some(prologue_span),
    })
}

fn skip_reason(unit: &FunctionUnit, policy: &ElisionPolicy, stub_len: usize) -> Option<SkipReason> {
    if policy.skip_kinds.contains(&unit.kind) {
        Some(SkipReason::Kind)
    } else if unit.is_async && policy.skip_async {
        Some(SkipReason::Async)
    } else if unit.is_generator && policy.skip_generators {
        Some(SkipReason::Generator)
    } else if unit.uses_frame_meta {
        Some(SkipReason::FrameMeta)
    } else if !policy.allow_growth && unit.body_span.len() <= stub_len + policy.min_body_bytes {
        Some(SkipReason::TooSmall)
    } else {
        None
    }
}

/// The replacement text for `unit`'s body. Block bodies keep their directive
/// prologue so strictness is unchanged; generators delegate with `yield*`.
fn stub_for(
    source: &str,
    unit: &FunctionUnit,
    templates: &RuntimeTemplates,
    key: &ResourceKey,
    body_url: &str,
) -> String {
    let call = templates.stub_call(key, body_url);
    if unit.expression_body {
        return call;
    }
    let mut stub = String::from("{");
    if let Some(d) = unit.directives {
        stub.push_str(d.slice(source));
        if !stub.ends_with(';') {
            stub.push(';');
        }
    }
    stub.push_str("return ");
    if unit.is_generator {
        stub.push_str("yield* ");
    }
    stub.push_str(&call);
    stub.push('}');
    stub
}

/// Sidecar text for `unit`: its original body wrapped so that one direct
/// evaluation inside the stub both defines and calls it with the stub's
/// receiver and arguments.
pub fn sidecar_for(source: &str, unit: &FunctionUnit, templates: &RuntimeTemplates) -> String {
    let body = unit.body_span.slice(source);
    let is_arrow = unit.kind == FunctionKind::Arrow;
    if unit.expression_body {
        templates.sidecar(is_arrow, unit.is_async, unit.is_generator, &format!("({body})"))
    } else {
        templates.sidecar(is_arrow, unit.is_async, unit.is_generator, body)
    }
}
