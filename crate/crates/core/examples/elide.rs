//! Elides every function a simulated page load never ran and prints the
//! stubs, sidecars and statistics.
//!
//! `cargo run -p jselide-core --example elide`

use std::collections::HashSet;

use jselide_core::runtime::RuntimeTemplates;
use jselide_core::{analyze, elide, ElisionPolicy, ResourceKey};

const SOURCE: &str = include_str!("../../proxy/tests/site/cart.js");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let key = ResourceKey::new("https://shop.test/js/cart.js", SOURCE.as_bytes());
    let analysis = analyze(SOURCE, &key)?;

    // Pretend the page ran the top-level IIFE and the first three functions.
    let executed: HashSet<_> = analysis.units.iter().take(4).map(|u| u.id.clone()).collect();
    let base = format!("/__jscov__/body/{}", key.content_hash);
    let result = elide(SOURCE, &analysis, &executed, &ElisionPolicy::default(), &RuntimeTemplates::default(), &base)?;

    for r in &result.replacements {
        println!("stub for {}: {}", r.id, &result.body[r.output.start..r.output.end]);
    }
    if let Some((id, text)) = result.sidecars.iter().next() {
        println!("\nsidecar {base}/{id}:\n{text}\n");
    }
    for (id, reason) in &result.skipped {
        println!("kept {id}: {reason:?}");
    }
    let s = &result.stats;
    println!(
        "elided {}/{} functions, {} of {} bytes; output {} bytes",
        s.elided_functions,
        s.total_functions,
        s.elided_bytes,
        s.total_bytes,
        result.body.len()
    );
    Ok(())
}
