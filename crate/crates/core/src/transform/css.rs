use super::TransformError;
use crate::analyzer::SourceSpan;

/// Keeps only the `used` byte ranges of `css`, in order.
///
/// Ranges must be non-empty, sorted, non-overlapping (touching is fine), in
/// bounds, and must fall on character boundaries.
pub fn elide_css(css: &str, used: &[SourceSpan]) -> Result<String, TransformError> {
    let mut prev_end = 0;
    for span in used {
        let err = |reason| TransformError::Range { start: span.start, end: span.end, reason };
        if span.start >= span.end {
            return Err(err("empty or reversed range"));
        }
        if span.end > css.len() {
            return Err(err("range exceeds stylesheet length"));
        }
        if span.start < prev_end {
            return Err(err("ranges overlap or are unsorted"));
        }
        if !css.is_char_boundary(span.start) || !css.is_char_boundary(span.end) {
            return Err(err("range splits a character"));
        }
        prev_end = span.end;
    }
    Ok(used.iter().map(|s| s.slice(css)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_first_rule() {
        let css = "a{color:red}b{color:blue}";
        assert_eq!(elide_css(css, &[SourceSpan::new(0, 12)]).unwrap(), "a{color:red}");
    }

    #[test]
    fn identity_and_empty() {
        let css = "a{}b{}";
        assert_eq!(elide_css(css, &[SourceSpan::new(0, css.len())]).unwrap(), css);
        assert_eq!(elide_css(css, &[]).unwrap(), "");
    }

    #[test]
    fn rejects_bad_ranges() {
        let css = "a{}b{}";
        assert!(elide_css(css, &[SourceSpan::new(3, 6), SourceSpan::new(0, 3)]).is_err());
        assert!(elide_css(css, &[SourceSpan::new(0, 4), SourceSpan::new(3, 6)]).is_err());
        assert!(elide_css(css, &[SourceSpan::new(0, 7)]).is_err());
        assert!(elide_css(css, &[SourceSpan::new(2, 2)]).is_err());
        assert!(elide_css("é{}", &[SourceSpan::new(1, 3)]).is_err());
    }
}
