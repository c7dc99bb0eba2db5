//! Lists every function unit in a script with its id, kind and spans.
//!
//! `cargo run -p jselide-core --example analyze [file.js]`

use jselide_core::{analyze, ResourceKey};

const SAMPLE: &str = include_str!("../../proxy/tests/site/cart.js");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (url, source) = match std::env::args().nth(1) {
        Some(path) => (format!("file://{path}"), std::fs::read_to_string(&path)?),
        None => ("https://shop.test/js/cart.js".to_string(), SAMPLE.to_string()),
    };
    let key = ResourceKey::new(&url, source.as_bytes());
    let analysis = analyze(&source, &key)?;
    println!("{} ({} bytes, hash {})", key.url, source.len(), key.content_hash);
    for u in &analysis.units {
        println!(
            "{}  {:<11} depth {}  span {:>5}..{:<5}  body {:>5}..{:<5}  {}",
            u.id,
            format!("{:?}", u.kind),
            u.depth,
            u.span.start,
            u.span.end,
            u.body_span.start,
            u.body_span.end,
            u.name.as_deref().unwrap_or("<anonymous>"),
        );
    }
    Ok(())
}
