//! Records wire-format beacons in a file-backed store and watches a resource
//! move from learning to elided.
//!
//! `cargo run -p jselide-core --example coverage_store`

use jselide_core::{CoverageBeacon, CoverageStore, PhasePolicy, ResourceKey};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("coverage.log");
    let store = CoverageStore::open(&path)?;
    let policy = PhasePolicy::default();

    let key = ResourceKey::new("https://shop.test/js/app.js", b"function main() {}");
    let key_json = serde_json::to_string(&key)?;
    for load in 1..=6u64 {
        // The body a page's prologue posts to /__jscov__/beacon.
        let wire = format!(r#"{{"v":1,"key":{key_json},"ids":["{}"],"page":"https://shop.test/"}}"#, "a".repeat(16));
        let beacon = CoverageBeacon::from_json(wire.as_bytes(), load)?;
        let record = store.record_beacon(&beacon)?;
        println!("load {load}: {} beacons, phase {:?}", record.beacon_count, store.phase(&key, &policy));
    }

    let reloaded = CoverageStore::load(&path)?;
    println!("reloaded {} record(s) from {}", reloaded.len(), path.display());
    println!("{}", std::fs::read_to_string(&path)?);
    Ok(())
}
