//! Instruments a script with per-function coverage markers and shows that
//! stripping them restores the original bytes.
//!
//! `cargo run -p jselide-core --example instrument [file.js]`

use jselide_core::runtime::RuntimeTemplates;
use jselide_core::transform::strip_instrumentation;
use jselide_core::{analyze, instrument, ResourceKey};

const SAMPLE: &str = "function greet(name) {\n  return 'hi ' + name;\n}\nconst twice = (x) => x * 2;\ngreet('you');\n";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let source = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(path)?,
        None => SAMPLE.to_string(),
    };
    let key = ResourceKey::new("https://shop.test/js/greet.js", source.as_bytes());
    let analysis = analyze(&source, &key)?;
    let out = instrument(&source, &analysis, &RuntimeTemplates::default(), "/__jscov__/beacon")?;

    println!("{}", out.body);
    eprintln!("{} markers, {} -> {} bytes", out.marker_count, source.len(), out.body.len());
    assert_eq!(strip_instrumentation(&out.body), source);
    eprintln!("stripping the instrumentation restores the original");
    Ok(())
}
