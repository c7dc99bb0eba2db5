//! Builds a small cache and store, then writes the per-page report and the
//! CDF file the `jselide report` subcommand produces.
//!
//! `cargo run -p jselide-core --example report [out.csv]`

use std::collections::HashSet;

use jselide_core::cache::{CacheMeta, DiskCache};
use jselide_core::codec::ContentEncoding;
use jselide_core::report::{full_report, new_id_rate, write_reports, ReportOptions};
use jselide_core::{analyze, CoverageBeacon, CoverageStore, ElisionPolicy, ResourceKey};

const SCRIPTS: [(&str, &str); 2] = [
    ("https://www.shop.test/js/cart.js", include_str!("../../proxy/tests/site/cart.js")),
    ("https://cdn.tracker.test/analytics.js", include_str!("../../proxy/tests/site/analytics.js")),
];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let cache = DiskCache::open(dir.path().join("cache"))?;
    let store = CoverageStore::in_memory();

    for (url, source) in SCRIPTS {
        let key = ResourceKey::new(url, source.as_bytes());
        let analysis = analyze(source, &key)?;
        let executed: HashSet<_> = analysis.units.iter().step_by(3).map(|u| u.id.clone()).collect();
        cache.put(
            &CacheMeta {
                key: key.clone(),
                status: 200,
                headers: vec![],
                original_encoding: ContentEncoding::Identity,
                content_type: Some("text/javascript".into()),
                fetched_at: 0,
                is_js: true,
                opaque: false,
                analysis: Some(analysis),
            },
            source.as_bytes(),
        )?;
        store.record_beacon(&CoverageBeacon {
            version: 1,
            key,
            ids: executed.into_iter().collect(),
            page_url: Some("https://www.shop.test/".into()),
            received_at: 1,
        })?;
    }

    let options = ReportOptions { compressed: Some(ElisionPolicy::default()), ..ReportOptions::default() };
    let pages = full_report(&store, &cache, &options)?;
    let out = std::env::args().nth(1).map_or_else(|| dir.path().join("report.csv"), Into::into);
    let cdf = write_reports(&out, &pages, &new_id_rate(&store))?;
    print!("{}", std::fs::read_to_string(&out)?);
    println!("\n{}:\n{}", cdf.display(), std::fs::read_to_string(&cdf)?);
    Ok(())
}
