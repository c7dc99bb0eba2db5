//! Keeps only the byte ranges of a stylesheet that a browser reported as
//! used.
//!
//! `cargo run -p jselide-core --example css`

use jselide_core::{elide_css, SourceSpan};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let css = ".nav { color: red }\n.modal { display: none }\n.footer { margin: 0 }\n";
    let nav = css.find(".nav").unwrap();
    let footer = css.find(".footer").unwrap();
    let used = [SourceSpan::new(nav, css.find('\n').unwrap() + 1), SourceSpan::new(footer, css.len())];
    let out = elide_css(css, &used)?;
    print!("{out}");
    eprintln!("{} -> {} bytes", css.len(), out.len());
    Ok(())
}
