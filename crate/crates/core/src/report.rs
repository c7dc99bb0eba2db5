//! Superfluous-code statistics from coverage and cached analyses.
//!
//! Two CSV files are produced. The report CSV has a fixed column order:
//!
//! ```text
//! row,page_url,url,hash,party,resources,total_functions,executed_functions,
//! superfluous_functions,superfluous_pct,total_anonymous,anonymous_pct,
//! total_bytes,superfluous_bytes,superfluous_bytes_pct,
//! new_ids_after_first_beacon,gzip_bytes,gzip_elided_bytes
//! ```
//!
//! `row` is `resource` for one resource on one page, or `page` for a page
//! aggregate whose `party` is `first`, `third` or `all`. Byte counts are
//! decoded bytes; the two `gzip_*` columns are the gzip sizes of the original
//! and of the elided variant, and are empty when not computed.
//!
//! The CDF CSV has columns `metric,value,cumulative_fraction`, one block of
//! ascending values per metric.

use std::collections::{BTreeMap, HashSet};
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analyzer::{analyze, FunctionId, ResourceAnalysis};
use crate::cache::{CacheError, DiskCache, Variant};
use crate::codec::gzip_len;
use crate::key::ResourceKey;
use crate::party::{url_host, Party, PartyConfig};
use crate::runtime::RuntimeTemplates;
use crate::store::{CoverageRecord, CoverageStore};
use crate::transform::{elide, ElisionPolicy};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("coverage for {record} does not belong to analysis of {analysis}")]
    KeyMismatch { record: ResourceKey, analysis: ResourceKey },
    #[error("no resources for page {0}")]
    EmptyInput(String),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceStats {
    pub key: ResourceKey,
    pub party: Party,
    pub total_functions: usize,
    pub executed_functions: usize,
    pub superfluous_functions: usize,
    pub superfluous_pct: f64,
    pub total_anonymous: usize,
    pub anonymous_pct: f64,
    pub total_bytes: usize,
    pub superfluous_bytes: usize,
    pub superfluous_bytes_pct: f64,
    pub new_ids_after_first_beacon: usize,
    pub gzip_bytes: Option<usize>,
    pub gzip_elided_bytes: Option<usize>,
}

pub fn pct(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        (part as f64 * 100.0) / whole as f64
    }
}

/// Counts for one resource. Executed functions are counted among analyzed
/// units only. Superfluous bytes are the union of the bodies of units that
/// never ran, so a nested body is not counted twice.
pub fn resource_stats(
    analysis: &ResourceAnalysis,
    record: &CoverageRecord,
    party: Party,
) -> Result<ResourceStats, ReportError> {
    if record.key != analysis.key {
        return Err(ReportError::KeyMismatch { record: record.key.clone(), analysis: analysis.key.clone() });
    }
    let total = analysis.units.len();
    let executed = analysis.units.iter().filter(|u| record.executed.contains_key(&u.id)).count();
    let anonymous = analysis.anonymous_count();

    let mut superfluous_bytes = 0;
    let mut covered_until = 0;
    for unit in &analysis.units {
        if record.executed.contains_key(&unit.id) || unit.body_span.start < covered_until {
            continue;
        }
        superfluous_bytes += unit.body_span.len();
        covered_until = unit.body_span.end;
    }

    let late = analysis
        .units
        .iter()
        .filter(|u| record.executed.get(&u.id).is_some_and(|&ordinal| ordinal > 1))
        .count();

    Ok(ResourceStats {
        key: analysis.key.clone(),
        party,
        total_functions: total,
        executed_functions: executed,
        superfluous_functions: total - executed,
        superfluous_pct: pct(total - executed, total),
        total_anonymous: anonymous,
        anonymous_pct: pct(anonymous, total),
        total_bytes: analysis.source_len,
        superfluous_bytes,
        superfluous_bytes_pct: pct(superfluous_bytes, analysis.source_len),
        new_ids_after_first_beacon: late,
        gzip_bytes: None,
        gzip_elided_bytes: None,
    })
}

/// Gzip sizes of `source` and of its elided variant under `policy`.
pub fn compressed_sizes(
    source: &str,
    analysis: &ResourceAnalysis,
    executed: &HashSet<FunctionId>,
    policy: &ElisionPolicy,
) -> (usize, usize) {
    let original = gzip_len(source.as_bytes());
    let base = format!("/__jscov__/body/{}", analysis.key.content_hash);
    let elided = match elide(source, analysis, executed, policy, &RuntimeTemplates::default(), &base) {
        Ok(r) => gzip_len(r.body.as_bytes()),
        Err(_) => original,
    };
    (original, elided)
}

/// Sums over the resources of one party on one page.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PartyAggregate {
    pub resources: usize,
    pub total_functions: usize,
    pub executed_functions: usize,
    pub superfluous_functions: usize,
    pub total_anonymous: usize,
    pub total_bytes: usize,
    pub superfluous_bytes: usize,
    pub new_ids_after_first_beacon: usize,
    pub gzip_bytes: Option<usize>,
    pub gzip_elided_bytes: Option<usize>,
}

impl PartyAggregate {
    fn add(&mut self, s: &ResourceStats) {
        let first = self.resources == 0;
        self.resources += 1;
        self.total_functions += s.total_functions;
        self.executed_functions += s.executed_functions;
        self.superfluous_functions += s.superfluous_functions;
        self.total_anonymous += s.total_anonymous;
        self.total_bytes += s.total_bytes;
        self.superfluous_bytes += s.superfluous_bytes;
        self.new_ids_after_first_beacon += s.new_ids_after_first_beacon;
        self.gzip_bytes = sum_opt(first, self.gzip_bytes, s.gzip_bytes);
        self.gzip_elided_bytes = sum_opt(first, self.gzip_elided_bytes, s.gzip_elided_bytes);
    }

    pub fn is_empty(&self) -> bool {
        self.resources == 0
    }

    pub fn superfluous_pct(&self) -> f64 {
        pct(self.superfluous_functions, self.total_functions)
    }

    pub fn anonymous_pct(&self) -> f64 {
        pct(self.total_anonymous, self.total_functions)
    }

    /// Byte-weighted share of superfluous code.
    pub fn superfluous_bytes_pct(&self) -> f64 {
        pct(self.superfluous_bytes, self.total_bytes)
    }
}

// A compressed total is only meaningful when every resource contributed one.
fn sum_opt(first: bool, acc: Option<usize>, v: Option<usize>) -> Option<usize> {
    if first {
        v
    } else {
        Some(acc? + v?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageReport {
    pub page_url: String,
    pub resources: Vec<ResourceStats>,
    pub first_party: PartyAggregate,
    pub third_party: PartyAggregate,
    pub all: PartyAggregate,
    /// Byte-weighted over every resource on the page.
    pub page_superfluous_pct: f64,
}

impl PageReport {
    pub fn from_resources(page_url: impl Into<String>, resources: Vec<ResourceStats>) -> Self {
        let mut first_party = PartyAggregate::default();
        let mut third_party = PartyAggregate::default();
        let mut all = PartyAggregate::default();
        for s in &resources {
            match s.party {
                Party::First => first_party.add(s),
                Party::Third => third_party.add(s),
            }
            all.add(s);
        }
        let page_superfluous_pct = all.superfluous_bytes_pct();
        Self { page_url: page_url.into(), resources, first_party, third_party, all, page_superfluous_pct }
    }

    /// The first-party aggregate is empty; such pages are flagged in the CSV
    /// by a `first` row with zero resources.
    pub fn lacks_first_party(&self) -> bool {
        self.first_party.is_empty()
    }
}

#[derive(Debug, Clone, Default)]
pub struct ReportOptions {
    pub party: PartyConfig,
    /// Compute the `gzip_*` columns with this policy.
    pub compressed: Option<ElisionPolicy>,
}

/// Analysis and decoded source of a cached resource, re-analyzing when the
/// cache holds no analysis.
fn load_resource(cache: &DiskCache, key: &ResourceKey) -> Result<Option<(String, ResourceAnalysis)>, ReportError> {
    let Some(original) = cache.read_variant(&key.content_hash, Variant::Original)? else {
        return Ok(None);
    };
    let Ok(source) = String::from_utf8(original) else {
        return Ok(None);
    };
    let meta = cache.read_meta(&key.content_hash)?;
    let mut analysis = match meta.and_then(|m| m.analysis) {
        Some(a) => a,
        None => analyze(&source, key).unwrap_or_else(|_| ResourceAnalysis::unparsed(key.clone(), source.len())),
    };
    // The cache is keyed by hash alone; the same bytes may have been served
    // from several URLs.
    analysis.key = key.clone();
    Ok(Some((source, analysis)))
}

fn stats_for(
    cache: &DiskCache,
    record: &CoverageRecord,
    page_url: &str,
    options: &ReportOptions,
) -> Result<Option<ResourceStats>, ReportError> {
    let Some((source, analysis)) = load_resource(cache, &record.key)? else {
        tracing::warn!(key = %record.key, "no cached body; resource left out of report");
        return Ok(None);
    };
    let party = match (url_host(&record.key.url), url_host(page_url)) {
        (Some(r), Some(p)) => options.party.classify(r, p).unwrap_or(Party::Third),
        _ => Party::First,
    };
    let mut stats = resource_stats(&analysis, record, party)?;
    if let Some(policy) = &options.compressed {
        let (g, e) = compressed_sizes(&source, &analysis, &record.executed_set(), policy);
        stats.gzip_bytes = Some(g);
        stats.gzip_elided_bytes = Some(e);
    }
    Ok(Some(stats))
}

/// Report for the resources whose beacons named `page_url`.
pub fn page_report(
    store: &CoverageStore,
    cache: &DiskCache,
    page_url: &str,
    options: &ReportOptions,
) -> Result<PageReport, ReportError> {
    let mut resources = Vec::new();
    for record in store.records().iter().filter(|r| r.pages.contains(page_url)) {
        if let Some(stats) = stats_for(cache, record, page_url, options)? {
            resources.push(stats);
        }
    }
    if resources.is_empty() {
        return Err(ReportError::EmptyInput(page_url.to_string()));
    }
    Ok(PageReport::from_resources(page_url, resources))
}

/// One report per page seen in the store, ordered by page URL. Resources
/// whose beacons never named a page are grouped under the empty page URL.
pub fn full_report(store: &CoverageStore, cache: &DiskCache, options: &ReportOptions) -> Result<Vec<PageReport>, ReportError> {
    let mut pages: BTreeMap<String, Vec<ResourceStats>> = BTreeMap::new();
    for record in store.records() {
        let names: Vec<String> = if record.pages.is_empty() {
            vec![String::new()]
        } else {
            record.pages.iter().cloned().collect()
        };
        for page in names {
            if let Some(stats) = stats_for(cache, &record, &page, options)? {
                pages.entry(page).or_default().push(stats);
            }
        }
    }
    Ok(pages.into_iter().map(|(page, res)| PageReport::from_resources(page, res)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowKind {
    Resource,
    Page,
}

/// One line of the report CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub row: RowKind,
    pub page_url: String,
    pub url: String,
    pub hash: String,
    pub party: String,
    pub resources: usize,
    pub total_functions: usize,
    pub executed_functions: usize,
    pub superfluous_functions: usize,
    pub superfluous_pct: f64,
    pub total_anonymous: usize,
    pub anonymous_pct: f64,
    pub total_bytes: usize,
    pub superfluous_bytes: usize,
    pub superfluous_bytes_pct: f64,
    pub new_ids_after_first_beacon: usize,
    pub gzip_bytes: Option<usize>,
    pub gzip_elided_bytes: Option<usize>,
}

impl ReportRow {
    pub fn resource(page_url: &str, s: &ResourceStats) -> Self {
        Self {
            row: RowKind::Resource,
            page_url: page_url.to_string(),
            url: s.key.url.clone(),
            hash: s.key.content_hash.clone(),
            party: s.party.to_string(),
            resources: 1,
            total_functions: s.total_functions,
            executed_functions: s.executed_functions,
            superfluous_functions: s.superfluous_functions,
            superfluous_pct: s.superfluous_pct,
            total_anonymous: s.total_anonymous,
            anonymous_pct: s.anonymous_pct,
            total_bytes: s.total_bytes,
            superfluous_bytes: s.superfluous_bytes,
            superfluous_bytes_pct: s.superfluous_bytes_pct,
            new_ids_after_first_beacon: s.new_ids_after_first_beacon,
            gzip_bytes: s.gzip_bytes,
            gzip_elided_bytes: s.gzip_elided_bytes,
        }
    }

    pub fn page(page_url: &str, party: &str, a: &PartyAggregate) -> Self {
        Self {
            row: RowKind::Page,
            page_url: page_url.to_string(),
            url: String::new(),
            hash: String::new(),
            party: party.to_string(),
            resources: a.resources,
            total_functions: a.total_functions,
            executed_functions: a.executed_functions,
            superfluous_functions: a.superfluous_functions,
            superfluous_pct: a.superfluous_pct(),
            total_anonymous: a.total_anonymous,
            anonymous_pct: a.anonymous_pct(),
            total_bytes: a.total_bytes,
            superfluous_bytes: a.superfluous_bytes,
            superfluous_bytes_pct: a.superfluous_bytes_pct(),
            new_ids_after_first_beacon: a.new_ids_after_first_beacon,
            gzip_bytes: a.gzip_bytes,
            gzip_elided_bytes: a.gzip_elided_bytes,
        }
    }

    /// The resource statistics a `resource` row was made from.
    pub fn to_stats(&self) -> Option<ResourceStats> {
        if self.row != RowKind::Resource {
            return None;
        }
        Some(ResourceStats {
            key: ResourceKey { url: self.url.clone(), content_hash: self.hash.clone() },
            party: self.party.parse().ok()?,
            total_functions: self.total_functions,
            executed_functions: self.executed_functions,
            superfluous_functions: self.superfluous_functions,
            superfluous_pct: self.superfluous_pct,
            total_anonymous: self.total_anonymous,
            anonymous_pct: self.anonymous_pct,
            total_bytes: self.total_bytes,
            superfluous_bytes: self.superfluous_bytes,
            superfluous_bytes_pct: self.superfluous_bytes_pct,
            new_ids_after_first_beacon: self.new_ids_after_first_beacon,
            gzip_bytes: self.gzip_bytes,
            gzip_elided_bytes: self.gzip_elided_bytes,
        })
    }
}

/// Resource rows followed by `first`, `third` and `all` page rows, per page.
pub fn report_rows(pages: &[PageReport]) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    for page in pages {
        rows.extend(page.resources.iter().map(|s| ReportRow::resource(&page.page_url, s)));
        rows.push(ReportRow::page(&page.page_url, "first", &page.first_party));
        rows.push(ReportRow::page(&page.page_url, "third", &page.third_party));
        rows.push(ReportRow::page(&page.page_url, "all", &page.all));
    }
    rows
}

pub fn write_report_csv<W: io::Write>(out: W, pages: &[PageReport]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    for row in report_rows(pages) {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_report_csv<R: io::Read>(input: R) -> Result<Vec<ReportRow>, ReportError> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<Result<Vec<ReportRow>, _>>()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub metric: String,
    pub value: f64,
    pub cumulative_fraction: f64,
}

/// Ascending values with their empirical cumulative fraction `(i+1)/n`.
pub fn cdf(metric: &str, values: impl IntoIterator<Item = f64>) -> Vec<CdfPoint> {
    let mut v: Vec<f64> = values.into_iter().collect();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.into_iter()
        .enumerate()
        .map(|(i, value)| CdfPoint { metric: metric.to_string(), value, cumulative_fraction: (i + 1) as f64 / n })
        .collect()
}

/// CDF blocks, one per metric, for the per-resource and per-page distributions.
pub fn cdf_points(pages: &[PageReport], rates: &NewIdRate) -> Vec<CdfPoint> {
    let res = || pages.iter().flat_map(|p| p.resources.iter());
    let mut out = Vec::new();
    out.extend(cdf("resource_superfluous_pct", res().map(|s| s.superfluous_pct)));
    out.extend(cdf("resource_superfluous_bytes_pct", res().map(|s| s.superfluous_bytes_pct)));
    out.extend(cdf("resource_anonymous_pct", res().map(|s| s.anonymous_pct)));
    out.extend(cdf("page_superfluous_bytes_pct", pages.iter().map(|p| p.page_superfluous_pct)));
    out.extend(cdf(
        "page_first_party_superfluous_bytes_pct",
        pages.iter().filter(|p| !p.first_party.is_empty()).map(|p| p.first_party.superfluous_bytes_pct()),
    ));
    out.extend(cdf(
        "page_third_party_superfluous_bytes_pct",
        pages.iter().filter(|p| !p.third_party.is_empty()).map(|p| p.third_party.superfluous_bytes_pct()),
    ));
    out.extend(cdf("resource_new_id_fraction", rates.per_resource.iter().map(|(_, f)| *f)));
    out
}

pub fn write_cdf_csv<W: io::Write>(out: W, points: &[CdfPoint]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

/// Share of ids first reported after the first beacon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewIdRate {
    /// Per resource: late ids over all executed ids (0 when nothing ran).
    pub per_resource: Vec<(ResourceKey, f64)>,
    /// Fraction of resources with any late id.
    pub share_with_late_ids: f64,
}

pub fn new_id_rate(store: &CoverageStore) -> NewIdRate {
    let per_resource: Vec<(ResourceKey, f64)> = store
        .records()
        .into_iter()
        .map(|r| {
            let executed = r.executed.len();
            let f = if executed == 0 { 0.0 } else { r.late_ids() as f64 / executed as f64 };
            (r.key, f)
        })
        .collect();
    let late = per_resource.iter().filter(|(_, f)| *f > 0.0).count();
    let share = if per_resource.is_empty() { 0.0 } else { late as f64 / per_resource.len() as f64 };
    NewIdRate { per_resource, share_with_late_ids: share }
}

/// Writes `<out>` (report rows) and `<out stem>.cdf.csv` next to it. Returns
/// the CDF path.
pub fn write_reports(out: &Path, pages: &[PageReport], rates: &NewIdRate) -> Result<std::path::PathBuf, ReportError> {
    let cdf_path = out.with_extension("cdf.csv");
    write_report_csv(std::fs::File::create(out)?, pages)?;
    write_cdf_csv(std::fs::File::create(&cdf_path)?, &cdf_points(pages, rates))?;
    Ok(cdf_path)
}
