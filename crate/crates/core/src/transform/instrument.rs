use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{check_analysis, TransformError};
use crate::analyzer::{check_syntax, ResourceAnalysis, SourceSpan};
use crate::key::ResourceKey;
use crate::runtime::{RuntimeTemplates, ARROW_RETURN_CLOSE};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstrumentedResource {
    pub key: ResourceKey,
    pub body: String,
    pub marker_count: usize,
    /// Location of the coverage prologue within `body`.
    pub prologue_span: SourceSpan,
}

/// Text spliced into the source at one offset. Ties are broken by `rank`:
/// arrow closers first (innermost first), then the prologue, then openers
/// and markers (outermost first).
struct Insertion {
    offset: usize,
    rank: (u8, u32),
    text: String,
    is_prologue: bool,
}

/// Adds the coverage prologue and one marker per function unit. Expression
/// bodied arrows are turned into block bodies so the marker has somewhere to
/// go: `x => e` becomes `x => {<marker>return (e)/*jselide:ret*/;}`.
pub fn instrument(
    source: &str,
    analysis: &ResourceAnalysis,
    templates: &RuntimeTemplates,
    beacon_url: &str,
) -> Result<InstrumentedResource, TransformError> {
    check_analysis(source, analysis)?;
    let key = &analysis.key;

    let mut inserts = Vec::with_capacity(analysis.units.len() + 1);
    inserts.push(Insertion {
        offset: analysis.prologue_offset,
        rank: (1, 0),
        text: templates.prologue(key, beacon_url),
        is_prologue: true,
    });
    for unit in &analysis.units {
        let marker = templates.marker(key, unit.id.as_str());
        if unit.expression_body {
            inserts.push(Insertion {
                offset: unit.body_span.start,
                rank: (2, unit.depth),
                text: format!("{{{marker}return ("),
                is_prologue: false,
            });
            inserts.push(Insertion {
                offset: unit.body_span.end,
                rank: (0, u32::MAX - unit.depth),
                text: ARROW_RETURN_CLOSE.to_string(),
                is_prologue: false,
            });
        } else {
            inserts.push(Insertion {
                offset: unit.body_insert_offset(),
                rank: (2, unit.depth),
                text: marker,
                is_prologue: false,
            });
        }
    }
    inserts.sort_by_key(|i| (i.offset, i.rank));

    let extra: usize = inserts.iter().map(|i| i.text.len()).sum();
    let mut body = String::with_capacity(source.len() + extra);
    let mut cursor = 0;
    let mut prologue_span = SourceSpan::new(0, 0);
    for ins in inserts {
        body.push_str(&source[cursor..ins.offset]);
        cursor = ins.offset;
        let start = body.len();
        body.push_str(&ins.text);
        if ins.is_prologue {
            prologue_span = SourceSpan::new(start, body.len());
        }
    }
    body.push_str(&source[cursor..]);

    check_syntax(&body, analysis.goal).map_err(TransformError::Reparse)?;

    Ok(InstrumentedResource {
        key: key.clone(),
        body,
        marker_count: analysis.units.len(),
        prologue_span,
    })
}

/// Removes everything [`instrument`] added (with the default templates) using
/// only the text itself: the prologue, every marker, and arrow block wrappers.
pub fn strip_instrumentation(instrumented: &str) -> String {
    static PATTERNS: OnceLock<[Regex; 4]> = OnceLock::new();
    let [prologue, arrow_open, marker, arrow_close] = PATTERNS.get_or_init(|| {
        let marker = r#";try\{__jselide_[0-9a-f]{16}\.push\("[0-9A-Za-z_-]+"\)\}catch\(__jselide_e\)\{\};"#;
        [
            Regex::new(r";/\*jselide:prologue\*/.*?/\*jselide:end\*/").unwrap(),
            Regex::new(&format!(r"\{{{marker}return \(")).unwrap(),
            Regex::new(marker).unwrap(),
            Regex::new(&regex::escape(ARROW_RETURN_CLOSE)).unwrap(),
        ]
    });
    let text = prologue.replace_all(instrumented, "");
    let text = arrow_open.replace_all(&text, "");
    let text = marker.replace_all(&text, "");
    arrow_close.replace_all(&text, "").into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyzer::analyze;

    fn inst(src: &str) -> (ResourceAnalysis, InstrumentedResource) {
        let key = ResourceKey::new("https://a.test/x.js", src.as_bytes());
        let a = analyze(src, &key).unwrap();
        let r = instrument(src, &a, &RuntimeTemplates::default(), "/__jscov__/beacon").unwrap();
        (a, r)
    }

    #[test]
    fn declaration_gets_marker_first() {
        let (a, r) = inst("function f(){return 1}");
        assert_eq!(r.marker_count, 1);
        let id = a.units[0].id.as_str();
        let marker = format!(r#";try{{{}.push("{id}")}}catch(__jselide_e){{}};"#, crate::runtime::coverage_global(&a.key));
        assert!(r.body.ends_with(&format!("function f(){{{marker}return 1}}")), "{}", r.body);
        assert_eq!(strip_instrumentation(&r.body), "function f(){return 1}");
    }

    #[test]
    fn expression_arrow_becomes_block() {
        let (_, r) = inst("var g = () => 1");
        let tail = &r.body[r.prologue_span.end..];
        assert!(tail.starts_with("var g = () => {;try{"), "{tail}");
        assert!(tail.ends_with("return (1)/*jselide:ret*/;}"), "{tail}");
    }

    #[test]
    fn nothing_to_instrument() {
        let (_, r) = inst("var x = 3;");
        assert_eq!(r.marker_count, 0);
        assert_eq!(&r.body[r.prologue_span.end..], "var x = 3;");
        assert_eq!(r.prologue_span.start, 0);
    }

    #[test]
    fn directives_stay_in_front() {
        let src = "'use strict'\nfunction f(){ \"use strict\"\n return this }";
        let (_, r) = inst(src);
        assert!(r.body.starts_with("'use strict';/*jselide:prologue*/"));
        assert!(r.body.contains("\"use strict\";try{"));
        assert_eq!(strip_instrumentation(&r.body), src);
    }

    #[test]
    fn nested_expression_arrows_close_innermost_first() {
        let src = "const c = a => b => c => a + b + c;";
        let (_, r) = inst(src);
        assert!(r.body.contains("return (a + b + c)/*jselide:ret*/;})/*jselide:ret*/;})/*jselide:ret*/;};"));
        assert_eq!(strip_instrumentation(&r.body), src);
    }

    #[test]
    fn mismatched_analysis_is_rejected() {
        let (a, _) = inst("var x = 1;");
        let err = instrument("var x = 2;", &a, &RuntimeTemplates::default(), "/b").unwrap_err();
        assert!(matches!(err, TransformError::AnalysisMismatch { .. }));
    }
}
