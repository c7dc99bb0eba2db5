//! Function inventory for a JavaScript resource.
//!
//! Every function-like syntactic unit is reported: declarations, function
//! expressions, arrows, class and object methods, accessors and constructors.
//! Spans are byte offsets into the decoded UTF-8 source, which is what all
//! downstream splicing works on.

use std::collections::HashSet;
use std::fmt;

use oxc_allocator::Allocator;
use oxc_ast::ast::{
    ArrowFunctionBody, ArrowFunctionExpression, Expression, Function, FunctionBody, FunctionType,
    MethodDefinition, MethodDefinitionKind, NewTarget, ObjectProperty, Program, PropertyKey,
    PropertyKind, Super,
};
use oxc_ast_visit::{walk, Visit};
use oxc_parser::Parser;
use oxc_span::{GetSpan, SourceType, Span};
use oxc_syntax::scope::ScopeFlags;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::key::ResourceKey;

/// Half-open byte range `[start, end)` into a source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SourceSpan {
    pub start: usize,
    pub end: usize,
}

impl SourceSpan {
    pub const fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub const fn len(&self) -> usize {
        self.end - self.start
    }

    pub const fn is_empty(&self) -> bool {
        self.start == self.end
    }

    /// `other` lies entirely within `self` (equal spans count).
    pub const fn contains(&self, other: &SourceSpan) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub const fn contains_offset(&self, offset: usize) -> bool {
        self.start <= offset && offset < self.end
    }

    pub fn slice<'s>(&self, source: &'s str) -> &'s str {
        &source[self.start..self.end]
    }
}

impl From<Span> for SourceSpan {
    fn from(span: Span) -> Self {
        Self::new(span.start as usize, span.end as usize)
    }
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{})", self.start, self.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FunctionKind {
    Declaration,
    Expression,
    Arrow,
    Method,
    Getter,
    Setter,
    Constructor,
}

impl FunctionKind {
    pub const ALL: [FunctionKind; 7] = [
        FunctionKind::Declaration,
        FunctionKind::Expression,
        FunctionKind::Arrow,
        FunctionKind::Method,
        FunctionKind::Getter,
        FunctionKind::Setter,
        FunctionKind::Constructor,
    ];

    pub const fn as_str(self) -> &'static str {
        match self {
            FunctionKind::Declaration => "declaration",
            FunctionKind::Expression => "expression",
            FunctionKind::Arrow => "arrow",
            FunctionKind::Method => "method",
            FunctionKind::Getter => "getter",
            FunctionKind::Setter => "setter",
            FunctionKind::Constructor => "constructor",
        }
    }
}

impl fmt::Display for FunctionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FunctionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FunctionKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown function kind `{s}`"))
    }
}

/// Opaque, URL-safe identifier of one function unit. Sixteen lowercase hex
/// digits, so it can be embedded in a JS string literal or a URL path as-is.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FunctionId(String);

impl FunctionId {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Accepts any non-empty id made of `[0-9A-Za-z_-]`, at most 64 bytes.
    /// Ids arriving in beacons are untrusted text; this keeps them safe to
    /// store and to echo into URLs.
    pub fn parse(s: &str) -> Option<Self> {
        let ok = !s.is_empty()
            && s.len() <= 64
            && s.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-');
        ok.then(|| Self(s.to_string()))
    }
}

impl fmt::Display for FunctionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Derives the stable id of the unit of `kind` starting at `unit_start` in the
/// resource identified by `key`.
pub fn function_id(key: &ResourceKey, unit_start: usize, kind: FunctionKind) -> FunctionId {
    salted_id(key, unit_start, kind, 0)
}

fn salted_id(key: &ResourceKey, unit_start: usize, kind: FunctionKind, salt: u32) -> FunctionId {
    let mut h = Sha256::new();
    h.update(key.content_hash.as_bytes());
    h.update(b":");
    h.update(unit_start.to_string().as_bytes());
    h.update(b":");
    h.update(kind.as_str().as_bytes());
    if salt > 0 {
        h.update(b":");
        h.update(salt.to_string().as_bytes());
    }
    let digest = h.finalize();
    FunctionId(hex::encode(&digest[..8]))
}

/// Whether the source parsed as a classic script or as an ES module.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceGoal {
    Script,
    Module,
}

impl SourceGoal {
    fn source_type(self) -> SourceType {
        match self {
            SourceGoal::Script => SourceType::script(),
            SourceGoal::Module => SourceType::mjs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionUnit {
    pub id: FunctionId,
    pub kind: FunctionKind,
    pub name: Option<String>,
    pub span: SourceSpan,
    /// The braces-inclusive body, or the expression of an expression-bodied arrow.
    pub body_span: SourceSpan,
    pub is_anonymous: bool,
    pub is_async: bool,
    pub is_generator: bool,
    pub depth: u32,
    /// Arrow whose body is a bare expression rather than a block.
    pub expression_body: bool,
    /// Directive prologue (`"use strict"` and friends) at the top of a block
    /// body, if any.
    pub directives: Option<SourceSpan>,
    /// The body refers to `super` or `new.target` of this unit's own frame;
    /// such bodies cannot run from an out-of-line wrapper.
    pub uses_frame_meta: bool,
}

impl FunctionUnit {
    /// Offset where the first statement of a block body may be inserted
    /// without disturbing its directive prologue. For expression bodies this is
    /// the start of the expression.
    pub fn body_insert_offset(&self) -> usize {
        if self.expression_body {
            self.body_span.start
        } else {
            self.directives.map_or(self.body_span.start + 1, |d| d.end)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceAnalysis {
    pub key: ResourceKey,
    /// Sorted by `span.start`; an enclosing unit precedes the units it contains.
    pub units: Vec<FunctionUnit>,
    pub source_len: usize,
    pub parse_ok: bool,
    pub goal: SourceGoal,
    /// Where top-level injected code goes: after any hashbang line and the
    /// script's own directive prologue.
    pub prologue_offset: usize,
}

impl ResourceAnalysis {
    /// Placeholder for a resource that could not be parsed. Carries no units
    /// and must never be transformed.
    pub fn unparsed(key: ResourceKey, source_len: usize) -> Self {
        Self {
            key,
            units: Vec::new(),
            source_len,
            parse_ok: false,
            goal: SourceGoal::Script,
            prologue_offset: 0,
        }
    }

    pub fn unit(&self, id: &FunctionId) -> Option<&FunctionUnit> {
        self.units.iter().find(|u| &u.id == id)
    }

    pub fn anonymous_count(&self) -> usize {
        self.units.iter().filter(|u| u.is_anonymous).count()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnalyzeError {
    #[error("content hash mismatch: key says {expected}, source hashes to {actual}")]
    KeyMismatch { expected: String, actual: String },
    #[error("syntax error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
}

/// Parses `source` and lists every function-like unit in it.
pub fn analyze(source: &str, key: &ResourceKey) -> Result<ResourceAnalysis, AnalyzeError> {
    let actual = crate::key::content_hash(source.as_bytes());
    if actual != key.content_hash {
        return Err(AnalyzeError::KeyMismatch {
            expected: key.content_hash.clone(),
            actual,
        });
    }

    let allocator = Allocator::default();
    let (goal, program) = parse_any(&allocator, source)?;

    let mut collector = Collector::default();
    collector.visit_program(&program);

    let prologue_offset = program_prologue_offset(source, &program);
    let units = finish_units(key, collector);

    Ok(ResourceAnalysis {
        key: key.clone(),
        units,
        source_len: source.len(),
        parse_ok: true,
        goal,
        prologue_offset,
    })
}

/// Reports whether `source` is syntactically valid JavaScript for `goal`.
pub fn check_syntax(source: &str, goal: SourceGoal) -> Result<(), AnalyzeError> {
    let allocator = Allocator::default();
    parse_as(&allocator, source, goal).map(|_| ())
}

fn parse_any<'a>(
    allocator: &'a Allocator,
    source: &'a str,
) -> Result<(SourceGoal, Program<'a>), AnalyzeError> {
    match parse_as(allocator, source, SourceGoal::Script) {
        Ok(p) => Ok((SourceGoal::Script, p)),
        Err(script_err) => match parse_as(allocator, source, SourceGoal::Module) {
            Ok(p) => Ok((SourceGoal::Module, p)),
            Err(_) => Err(script_err),
        },
    }
}

fn parse_as<'a>(
    allocator: &'a Allocator,
    source: &'a str,
    goal: SourceGoal,
) -> Result<Program<'a>, AnalyzeError> {
    let ret = Parser::new(allocator, source, goal.source_type()).parse();
    if ret.fatal_error || ret.diagnostics.has_errors() {
        let first = ret.diagnostics.errors().next();
        let offset = first
            .map(|d| d.labels.as_ref())
            .and_then(|labels| labels.first())
            .map_or(0, |l| l.offset() as usize);
        let message = first.map_or_else(|| "unrecoverable syntax error".to_string(), |d| d.message.to_string());
        return Err(AnalyzeError::Parse { offset, message });
    }
    Ok(ret.program)
}

fn program_prologue_offset(source: &str, program: &Program<'_>) -> usize {
    if let Some(last) = program.directives.last() {
        return last.span.end as usize;
    }
    match &program.hashbang {
        Some(hb) => {
            let end = hb.span.end as usize;
            source[end..]
                .find('\n')
                .map_or(source.len(), |i| end + i + 1)
        }
        None => 0,
    }
}

struct RawUnit {
    kind: FunctionKind,
    name: Option<String>,
    span: SourceSpan,
    body_span: SourceSpan,
    is_async: bool,
    is_generator: bool,
    expression_body: bool,
    directives: Option<SourceSpan>,
    uses_frame_meta: bool,
}

#[derive(Default)]
struct Collector {
    units: Vec<RawUnit>,
    /// Indices into `units` of the units whose bodies are being walked.
    open: Vec<usize>,
}

impl Collector {
    fn push(&mut self, unit: RawUnit) -> usize {
        self.units.push(unit);
        self.units.len() - 1
    }

    /// `super` / `new.target` belong to the nearest enclosing non-arrow unit;
    /// arrows in between see it lexically and are marked too.
    fn mark_frame_meta(&mut self) {
        for &idx in self.open.iter().rev() {
            let unit = &mut self.units[idx];
            unit.uses_frame_meta = true;
            if unit.kind != FunctionKind::Arrow {
                break;
            }
        }
    }

    fn function_unit(
        &self,
        kind: FunctionKind,
        name: Option<String>,
        span: Span,
        func: &Function<'_>,
        body: &FunctionBody<'_>,
    ) -> RawUnit {
        RawUnit {
            kind,
            name,
            span: span.into(),
            body_span: body.span.into(),
            is_async: func.r#async,
            is_generator: func.generator,
            expression_body: false,
            directives: directive_span(body),
            uses_frame_meta: false,
        }
    }

    /// Records a method-like unit whose span is the whole property/definition,
    /// then walks the key and the function without recording it again.
    fn visit_method_like<'a>(
        &mut self,
        kind: FunctionKind,
        span: Span,
        key: &PropertyKey<'a>,
        computed: bool,
        func: &Function<'a>,
    ) {
        self.visit_property_key(key);
        let Some(body) = &func.body else {
            return walk::walk_function(self, func, ScopeFlags::Function);
        };
        let name = if computed { None } else { static_key_name(key) };
        let idx = self.push(self.function_unit(kind, name, span, func, body));
        self.open.push(idx);
        walk::walk_function(self, func, ScopeFlags::Function);
        self.open.pop();
    }
}

fn directive_span(body: &FunctionBody<'_>) -> Option<SourceSpan> {
    let first = body.directives.first()?;
    let last = body.directives.last()?;
    Some(SourceSpan::new(first.span.start as usize, last.span.end as usize))
}

fn static_key_name(key: &PropertyKey<'_>) -> Option<String> {
    match key {
        PropertyKey::StaticIdentifier(id) => Some(id.name.to_string()),
        PropertyKey::PrivateIdentifier(id) => Some(format!("#{}", id.name)),
        PropertyKey::StringLiteral(s) => Some(s.value.to_string()),
        PropertyKey::NumericLiteral(n) => Some(
            n.raw
                .as_ref()
                .map_or_else(|| n.value.to_string(), |r| r.to_string()),
        ),
        _ => None,
    }
}

impl<'a> Visit<'a> for Collector {
    fn visit_function(&mut self, func: &Function<'a>, flags: ScopeFlags) {
        let kind = match func.r#type {
            FunctionType::FunctionDeclaration => Some(FunctionKind::Declaration),
            FunctionType::FunctionExpression => Some(FunctionKind::Expression),
            _ => None,
        };
        let unit = match (kind, &func.body) {
            (Some(kind), Some(body)) => {
                let name = func.id.as_ref().map(|id| id.name.to_string());
                Some(self.function_unit(kind, name, func.span, func, body))
            }
            _ => None,
        };
        match unit {
            Some(unit) => {
                let idx = self.push(unit);
                self.open.push(idx);
                walk::walk_function(self, func, flags);
                self.open.pop();
            }
            None => walk::walk_function(self, func, flags),
        }
    }

    fn visit_arrow_function_expression(&mut self, arrow: &ArrowFunctionExpression<'a>) {
        let (expression_body, directives) = match &arrow.body {
            ArrowFunctionBody::FunctionBody(body) => (false, directive_span(body)),
            _ => (true, None),
        };
        let idx = self.push(RawUnit {
            kind: FunctionKind::Arrow,
            name: None,
            span: arrow.span.into(),
            body_span: arrow.body.span().into(),
            is_async: arrow.r#async,
            is_generator: false,
            expression_body,
            directives,
            uses_frame_meta: false,
        });
        self.open.push(idx);
        walk::walk_arrow_function_expression(self, arrow);
        self.open.pop();
    }

    fn visit_method_definition(&mut self, method: &MethodDefinition<'a>) {
        for decorator in &method.decorators {
            self.visit_decorator(decorator);
        }
        let kind = match method.kind {
            MethodDefinitionKind::Constructor => FunctionKind::Constructor,
            MethodDefinitionKind::Method => FunctionKind::Method,
            MethodDefinitionKind::Get => FunctionKind::Getter,
            MethodDefinitionKind::Set => FunctionKind::Setter,
        };
        self.visit_method_like(kind, method.span, &method.key, method.computed, &method.value);
    }

    fn visit_object_property(&mut self, prop: &ObjectProperty<'a>) {
        let kind = match prop.kind {
            PropertyKind::Get => Some(FunctionKind::Getter),
            PropertyKind::Set => Some(FunctionKind::Setter),
            PropertyKind::Init if prop.method => Some(FunctionKind::Method),
            PropertyKind::Init => None,
        };
        match (kind, &prop.value) {
            (Some(kind), Expression::FunctionExpression(func)) => {
                self.visit_method_like(kind, prop.span, &prop.key, prop.computed, func);
            }
            _ => walk::walk_object_property(self, prop),
        }
    }

    fn visit_super(&mut self, _it: &Super) {
        self.mark_frame_meta();
    }

    fn visit_new_target(&mut self, _it: &NewTarget) {
        self.mark_frame_meta();
    }
}

fn finish_units(key: &ResourceKey, collector: Collector) -> Vec<FunctionUnit> {
    let mut raw = collector.units;
    raw.sort_by(|a, b| a.span.start.cmp(&b.span.start).then(b.span.end.cmp(&a.span.end)));

    let mut seen = HashSet::with_capacity(raw.len());
    let mut enclosing: Vec<SourceSpan> = Vec::new();
    let mut units = Vec::with_capacity(raw.len());
    for r in raw {
        while enclosing.last().is_some_and(|outer| !outer.contains(&r.span)) {
            enclosing.pop();
        }
        let depth = enclosing.len() as u32;
        enclosing.push(r.span);

        let mut salt = 0;
        let mut id = function_id(key, r.span.start, r.kind);
        while !seen.insert(id.clone()) {
            salt += 1;
            id = salted_id(key, r.span.start, r.kind, salt);
        }

        units.push(FunctionUnit {
            id,
            kind: r.kind,
            is_anonymous: r.name.is_none(),
            name: r.name,
            span: r.span,
            body_span: r.body_span,
            is_async: r.is_async,
            is_generator: r.is_generator,
            depth,
            expression_body: r.expression_body,
            directives: r.directives,
            uses_frame_meta: r.uses_frame_meta,
        });
    }
    units
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(src: &str) -> ResourceAnalysis {
        analyze(src, &ResourceKey::new("https://t.test/a.js", src.as_bytes())).unwrap()
    }

    #[test]
    fn single_declaration() {
        let a = run("function f(){return 1}");
        assert_eq!(a.units.len(), 1);
        let u = &a.units[0];
        assert_eq!(u.kind, FunctionKind::Declaration);
        assert_eq!(u.name.as_deref(), Some("f"));
        assert_eq!(u.span, SourceSpan::new(0, 22));
        assert_eq!(u.body_span, SourceSpan::new(12, 22));
        assert!(!u.is_anonymous);
        assert_eq!(u.depth, 0);
    }

    #[test]
    fn expression_arrow() {
        let a = run("var g = () => 1");
        let u = &a.units[0];
        assert_eq!(u.kind, FunctionKind::Arrow);
        assert!(u.is_anonymous);
        assert!(u.expression_body);
        assert_eq!(u.span, SourceSpan::new(8, 15));
        assert_eq!(u.body_span, SourceSpan::new(14, 15));
    }

    #[test]
    fn no_functions() {
        let a = run("var x = 3;");
        assert!(a.parse_ok);
        assert!(a.units.is_empty());
    }

    #[test]
    fn parse_error_is_reported() {
        let src = "function (";
        let err = analyze(src, &ResourceKey::new("u", src.as_bytes())).unwrap_err();
        assert!(matches!(err, AnalyzeError::Parse { .. }));
    }

    #[test]
    fn key_mismatch_is_reported() {
        let err = analyze("var a", &ResourceKey::new("u", b"var b")).unwrap_err();
        assert!(matches!(err, AnalyzeError::KeyMismatch { .. }));
    }

    #[test]
    fn modules_fall_back_to_module_goal() {
        let a = run("export function f(){}\nimport x from 'y';");
        assert_eq!(a.goal, SourceGoal::Module);
        assert_eq!(a.units.len(), 1);
    }

    #[test]
    fn named_expressions_are_named() {
        let a = run("var a = function b(){}; var c = function(){};");
        assert_eq!(a.units[0].name.as_deref(), Some("b"));
        assert!(!a.units[0].is_anonymous);
        assert!(a.units[1].is_anonymous);
    }

    #[test]
    fn method_forms() {
        let a = run("class A { constructor(){} get x(){return 1} set x(v){} static m(){} [k](){} }");
        let kinds: Vec<_> = a.units.iter().map(|u| u.kind).collect();
        assert_eq!(
            kinds,
            [
                FunctionKind::Constructor,
                FunctionKind::Getter,
                FunctionKind::Setter,
                FunctionKind::Method,
                FunctionKind::Method
            ]
        );
        assert!(a.units[4].is_anonymous);
        assert_eq!(a.units[3].span.slice("class A { constructor(){} get x(){return 1} set x(v){} static m(){} [k](){} }"), "static m(){}");
    }

    #[test]
    fn directives_and_insert_offset() {
        let src = "function f(){ 'use strict'; return 1 }";
        let a = run(src);
        let u = &a.units[0];
        let d = u.directives.unwrap();
        assert_eq!(d.slice(src), "'use strict';");
        assert_eq!(u.body_insert_offset(), d.end);
    }

    #[test]
    fn prologue_offset_skips_hashbang_and_directives() {
        assert_eq!(run("#!/bin/node\nvar a;").prologue_offset, 12);
        let src = "#!/bin/node\n'use strict';\nvar a;";
        assert_eq!(run(src).prologue_offset, src.find(';').unwrap() + 1);
        assert_eq!(run("var a;").prologue_offset, 0);
    }

    #[test]
    fn frame_meta_is_attributed_to_owning_frame() {
        let src = "class B extends A { m(){ const f = () => super.m(); function g(){ return 1 } return f() } }\nfunction C(){ if (!new.target) return; }";
        let a = run(src);
        let by_kind = |k| a.units.iter().find(|u| u.kind == k).unwrap();
        assert!(by_kind(FunctionKind::Method).uses_frame_meta);
        assert!(by_kind(FunctionKind::Arrow).uses_frame_meta);
        let g = a.units.iter().find(|u| u.name.as_deref() == Some("g")).unwrap();
        assert!(!g.uses_frame_meta);
        let c = a.units.iter().find(|u| u.name.as_deref() == Some("C")).unwrap();
        assert!(c.uses_frame_meta);
    }

    #[test]
    fn depth_counts_enclosing_units() {
        let a = run("function a(){ return function(){ return () => () => 1 } }");
        let depths: Vec<_> = a.units.iter().map(|u| u.depth).collect();
        assert_eq!(depths, [0, 1, 2, 3]);
    }

    #[test]
    fn function_id_properties() {
        let k = ResourceKey::new("u", b"x");
        let a = function_id(&k, 0, FunctionKind::Declaration);
        assert_eq!(a, function_id(&k, 0, FunctionKind::Declaration));
        assert_ne!(a, function_id(&k, 40, FunctionKind::Declaration));
        let other = ResourceKey::new("u", b"y");
        assert_ne!(a, function_id(&other, 0, FunctionKind::Declaration));
        assert!(a.as_str().len() <= 16);
        assert!(a.as_str().bytes().all(|b| b.is_ascii_hexdigit()));
    }

    #[test]
    fn function_id_parse_rejects_unsafe_text() {
        assert!(FunctionId::parse("abc123").is_some());
        assert!(FunctionId::parse("").is_none());
        assert!(FunctionId::parse("a\"b").is_none());
        assert!(FunctionId::parse("../x").is_none());
    }
}
