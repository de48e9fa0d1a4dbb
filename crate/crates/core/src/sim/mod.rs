//! Deterministic simulated archive.
//!
//! A [`SimConfig`] fully determines an archive: sites and pages, per-page
//! snapshot schedules, an epoch-based link change model, and fault
//! injections. The archive serves timemaps and mementos through the same
//! backend contract the live HTTP backend implements, so the walk engine
//! cannot tell them apart.
//!
//! Snapshot schedules are densest at the middle of the archive era and
//! thin out geometrically toward its edges, the way large archives hold
//! far more captures for their "golden years" than for their first ones. A
//! sticky-target session keeps asking near its fixed, usually well-covered
//! target and stays in dense territory; a sliding target random-walks onto
//! whatever snapshot got served and wanders into the sparse wings, where
//! each hop lands farther from where it aimed.
//!
//! Everything `serve` does is a pure function of the request, except the
//! one-shot 503 schedule, which depends on how many times a URI has been
//! requested. In-process sessions track those counts per walk session so
//! parallel campaigns stay deterministic; the loopback HTTP server keeps a
//! single shared counter instead (see [`http`]).

pub mod http;
pub mod oracle;

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::client::{Backend, BackendSession, RawResponse, TransportError};
use crate::memento::{ArchiveDatetime, MementoUri, OriginalUri, TimeMap};
use crate::timemap_link::write_link_timemap;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid sim config: {0}")]
    InvalidConfig(String),
}

/// Per-site archival profile: how sparse the site's snapshot grid is and
/// how many extra epoch-varying links its pages carry. Sparse, link-heavy
/// profiles model poorly-archived link-farm territory.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SiteProfile {
    pub gap_multiplier: f64,
    pub extra_links: usize,
}

/// A sample class with the fraction of its pages that are archived at all.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassConfig {
    pub name: String,
    pub archival_rate: f64,
}

/// One heavily self-linked, densely archived site. Walks that enter it
/// tend to stay, producing the long low-drift walks real hub sites cause.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HubConfig {
    pub pages: usize,
    pub links_per_page: usize,
}

/// Seed-derived fault injection rates. Each rate is the per-URI chance of
/// that fault; at most one fault lands on any given URI.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FaultRates {
    pub timemap_403: f64,
    pub timemap_503: f64,
    pub timemap_other: f64,
    pub memento_403: f64,
    pub memento_404: f64,
    pub memento_503: f64,
    /// Fraction of 503 faults that recover on the retry.
    pub memento_503_recover: f64,
    pub download_failed: f64,
    pub not_html: f64,
    /// Hard redirect from a snapshot to a nearby snapshot of the same page.
    pub memento_redirect: f64,
    pub redirect_skip_max: usize,
    pub memento_other: f64,
    /// Requests for a datetime between snapshots get a script redirect
    /// (status 200) instead of a clean 301, skewed a few snapshots toward
    /// older captures. Only the sliding policy fetches such URIs, so this
    /// is the knob that lets its target wander off into the archive's
    /// sparse early territory.
    pub soft_redirect_on_build: f64,
    pub soft_skip_max: usize,
}

impl FaultRates {
    pub fn none() -> Self {
        FaultRates {
            timemap_403: 0.0,
            timemap_503: 0.0,
            timemap_other: 0.0,
            memento_403: 0.0,
            memento_404: 0.0,
            memento_503: 0.0,
            memento_503_recover: 0.0,
            download_failed: 0.0,
            not_html: 0.0,
            memento_redirect: 0.0,
            redirect_skip_max: 2,
            memento_other: 0.0,
            soft_redirect_on_build: 0.0,
            soft_skip_max: 2,
        }
    }
}

impl Default for FaultRates {
    fn default() -> Self {
        Self::none()
    }
}

/// A hand-specified page, for fixtures. Archived iff `snapshots` is
/// non-empty.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplicitPage {
    pub uri: String,
    /// 14-digit datetimes.
    pub snapshots: Vec<String>,
    /// Outlinks, the same at every snapshot unless `snapshot_links` is
    /// given.
    pub links: Vec<String>,
    /// Per-snapshot outlink overrides, parallel to `snapshots`. Empty
    /// means every snapshot uses `links`.
    #[serde(default)]
    pub snapshot_links: Vec<Vec<String>>,
}

impl ExplicitPage {
    pub fn new(uri: &str, snapshots: &[&str], links: &[&str]) -> Self {
        ExplicitPage {
            uri: uri.to_string(),
            snapshots: snapshots.iter().map(|s| s.to_string()).collect(),
            links: links.iter().map(|s| s.to_string()).collect(),
            snapshot_links: Vec::new(),
        }
    }
}

/// An injected fault, materialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    Http403,
    Http404,
    Http503 { recover: bool },
    DownloadFailed,
    NotHtml,
    HardRedirect { to_uri: String, to_ts: i64 },
    SoftRedirect { to_uri: String, to_ts: i64 },
    OtherStatus(u16),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultScope {
    Timemap { uri: String },
    /// A specific snapshot, addressed by its 14-digit datetime.
    Memento { uri: String, datetime: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplicitFault {
    pub scope: FaultScope,
    pub fault: Fault,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub archive_base: String,
    pub n_sites: usize,
    /// Inclusive page-count range per site.
    pub pages_per_site: (usize, usize),
    pub classes: Vec<ClassConfig>,
    pub era_start: ArchiveDatetime,
    pub era_end: ArchiveDatetime,
    /// Densest inter-snapshot gap, at the middle of the era.
    pub base_gap_secs: u64,
    /// Geometric gap growth per snapshot moving outward from the era
    /// middle. Must be >= 1.
    pub gap_growth: f64,
    /// Chance each grid point is missing (incomplete crawls).
    pub snapshot_miss_rate: f64,
    /// Persistent intra-site outlinks per page (stable across epochs).
    pub core_links: usize,
    /// Epoch-varying outlinks per page, re-drawn each change epoch.
    pub epoch_links: usize,
    /// Chance an epoch link slot points at another site.
    pub cross_site_fraction: f64,
    pub change_epoch_secs: u64,
    /// Coverage span of sample (home) pages around the era middle, in
    /// seconds; 0 means full-era coverage like any other page. Samples
    /// model popular, densely archived entry pages, so sessions start
    /// with targets in well-covered territory.
    pub sample_coverage_secs: u64,
    /// Per-site profile drawn uniformly from this list.
    pub site_profiles: Vec<SiteProfile>,
    pub hub_site: Option<HubConfig>,
    pub faults: FaultRates,
    pub explicit_pages: Vec<ExplicitPage>,
    pub explicit_faults: Vec<ExplicitFault>,
}

impl SimConfig {
    /// A minimal empty-corpus skeleton; callers fill in pages either
    /// procedurally (`n_sites`) or explicitly.
    pub fn bare(seed: u64) -> Self {
        SimConfig {
            seed,
            archive_base: "http://archive.sim".into(),
            n_sites: 0,
            pages_per_site: (1, 1),
            classes: vec![ClassConfig { name: "dmoz".into(), archival_rate: 1.0 }],
            era_start: ArchiveDatetime::from_parts(1996, 1, 1, 0, 0, 0).unwrap(),
            era_end: ArchiveDatetime::from_parts(2013, 1, 1, 0, 0, 0).unwrap(),
            base_gap_secs: 4 * 86_400,
            gap_growth: 1.22,
            snapshot_miss_rate: 0.0,
            core_links: 3,
            epoch_links: 3,
            cross_site_fraction: 0.25,
            change_epoch_secs: 200 * 86_400,
            sample_coverage_secs: 0,
            site_profiles: vec![SiteProfile { gap_multiplier: 1.0, extra_links: 0 }],
            hub_site: None,
            faults: FaultRates::none(),
            explicit_pages: Vec::new(),
            explicit_faults: Vec::new(),
        }
    }
}

/// The default campaign corpus: four sample classes at their conventional
/// archival rates, snapshot grids densest mid-era (4-day base gap, 1.22
/// geometric growth, 10% misses), link sets re-drawn every 200 days with a
/// 3-link persistent core, a quarter of varying links crossing sites, and
/// mild fault injection throughout.
pub fn default_campaign(seed: u64) -> SimConfig {
    SimConfig {
        seed,
        n_sites: 48,
        pages_per_site: (5, 10),
        classes: vec![
            ClassConfig { name: "dmoz".into(), archival_rate: 0.952 },
            ClassConfig { name: "delicious".into(), archival_rate: 0.919 },
            ClassConfig { name: "bitly".into(), archival_rate: 0.235 },
            ClassConfig { name: "searchengine".into(), archival_rate: 0.264 },
        ],
        snapshot_miss_rate: 0.10,
        core_links: 5,
        epoch_links: 2,
        change_epoch_secs: 450 * 86_400,
        sample_coverage_secs: 240 * 86_400,
        site_profiles: vec![
            SiteProfile { gap_multiplier: 1.0, extra_links: 0 },
            SiteProfile { gap_multiplier: 1.0, extra_links: 0 },
            SiteProfile { gap_multiplier: 1.25, extra_links: 0 },
            SiteProfile { gap_multiplier: 1.5, extra_links: 0 },
        ],
        base_gap_secs: 4 * 86_400,
        gap_growth: 1.35,
        faults: FaultRates {
            timemap_403: 0.010,
            timemap_503: 0.004,
            timemap_other: 0.002,
            memento_403: 0.004,
            memento_404: 0.010,
            memento_503: 0.020,
            memento_503_recover: 0.10,
            download_failed: 0.004,
            not_html: 0.020,
            memento_redirect: 0.040,
            redirect_skip_max: 2,
            memento_other: 0.002,
            soft_redirect_on_build: 0.40,
            soft_skip_max: 5,
        },
        ..SimConfig::bare(seed)
    }
}

/// The worked three-page fixture: a CS home page captured 2005-03-31 and
/// 2005-05-14, and a Sciences home page captured 2005-04-22, each linking
/// to the other.
pub fn table1_fixture() -> SimConfig {
    let mut cfg = SimConfig::bare(1);
    cfg.explicit_pages = vec![
        ExplicitPage::new(
            "http://www.cs.odu.edu/",
            &["20050331010000", "20050514013608"],
            &["http://sci.odu.edu/"],
        ),
        ExplicitPage::new(
            "http://sci.odu.edu/",
            &["20050422001752"],
            &["http://www.cs.odu.edu/"],
        ),
    ];
    cfg
}

pub const CORPUS_VERSION: u32 = 1;

/// The archive-description file `simgen` writes and `campaign` loads: a
/// versioned wrapper around the config, which fully determines the
/// archive. Re-generating from an exported file yields an identical
/// corpus hash.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusFile {
    pub v: u32,
    pub config: SimConfig,
}

impl CorpusFile {
    pub fn new(config: SimConfig) -> Self {
        CorpusFile { v: CORPUS_VERSION, config }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).unwrap()
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let file: CorpusFile =
            serde_json::from_str(text).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        if file.v != CORPUS_VERSION {
            return Err(SimError::InvalidConfig(format!("unsupported corpus version {}", file.v)));
        }
        Ok(file)
    }
}

// --- deterministic derivation -------------------------------------------

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Stable sub-seed derivation: every sim decision hashes the corpus seed,
/// a tag naming the decision, and the decision's coordinates.
fn derive(seed: u64, tag: &str, parts: &[u64]) -> u64 {
    let mut h = mix64(seed ^ fnv1a(tag.as_bytes()));
    for &p in parts {
        h = mix64(h ^ p);
    }
    h
}

fn unit(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

// --- generated corpus -----------------------------------------------------

#[derive(Debug, Clone)]
struct SiteInfo {
    host: String,
    class: String,
    profile: SiteProfile,
    n_pages: usize,
    /// Hub pages link densely within the site and never vary by epoch.
    hub: bool,
}

#[derive(Debug, Clone)]
enum PageLinks {
    Procedural { site: usize, page_idx: usize },
    Explicit { default: Vec<String>, by_snapshot: Vec<Vec<String>> },
}

#[derive(Debug, Clone)]
struct Page {
    /// Sorted unix seconds; empty means the page was never archived.
    schedule: Vec<i64>,
    links: PageLinks,
}

pub struct SimArchive {
    cfg: SimConfig,
    sites: Vec<SiteInfo>,
    pages: std::collections::BTreeMap<String, Page>,
    timemap_faults: std::collections::BTreeMap<String, Fault>,
    memento_faults: std::collections::BTreeMap<(String, i64), Fault>,
    samples: Vec<(String, String)>,
}

/// Generates the archive a config describes. The same config always
/// yields a byte-identical corpus.
pub fn generate(cfg: &SimConfig) -> Result<SimArchive, SimError> {
    validate(cfg)?;
    let seed = cfg.seed;
    let era_start = cfg.era_start.timestamp();
    let era_end = cfg.era_end.timestamp();
    let center = era_start + (era_end - era_start) / 2;

    let mut sites = Vec::new();
    for s in 0..cfg.n_sites {
        let class = &cfg.classes[s % cfg.classes.len()];
        let profile =
            cfg.site_profiles[(derive(seed, "profile", &[s as u64]) % cfg.site_profiles.len() as u64) as usize];
        let (lo, hi) = cfg.pages_per_site;
        let n_pages = lo + (derive(seed, "npages", &[s as u64]) % (hi - lo + 1) as u64) as usize;
        sites.push(SiteInfo {
            host: format!("s{s}.{}.sim", class.name),
            class: class.name.clone(),
            profile,
            n_pages,
            hub: false,
        });
    }
    if let Some(hub) = &cfg.hub_site {
        sites.push(SiteInfo {
            host: "hub.sim".into(),
            class: "hub".into(),
            profile: SiteProfile { gap_multiplier: 0.5, extra_links: 0 },
            n_pages: hub.pages,
            hub: true,
        });
    }

    let mut pages = std::collections::BTreeMap::new();
    let mut samples = Vec::new();
    for (s, site) in sites.iter().enumerate() {
        let rate = if site.hub {
            1.0
        } else {
            cfg.classes.iter().find(|c| c.name == site.class).map(|c| c.archival_rate).unwrap_or(1.0)
        };
        for j in 0..site.n_pages {
            let uri = page_uri(&site.host, j);
            let archived = unit(derive(seed, "arch", &[s as u64, j as u64])) < rate;
            let schedule = if archived {
                let mut sched =
                    page_schedule(cfg, s, j, site.profile.gap_multiplier, era_start, era_end, center);
                if j == 0 && cfg.sample_coverage_secs > 0 {
                    let half = cfg.sample_coverage_secs as i64 / 2;
                    sched.retain(|&ts| (ts - center).abs() <= half);
                }
                sched
            } else {
                Vec::new()
            };
            pages.insert(uri.clone(), Page {
                schedule,
                links: PageLinks::Procedural { site: s, page_idx: j },
            });
            if j == 0 {
                samples.push((uri, site.class.clone()));
            }
        }
    }
    for ep in &cfg.explicit_pages {
        let uri = OriginalUri::parse(&ep.uri)
            .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        let normalize_links = |links: &[String]| {
            links
                .iter()
                .map(|l| OriginalUri::parse(l).map(|u| u.as_str().to_string()))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| SimError::InvalidConfig(e.to_string()))
        };
        let mut schedule = Vec::new();
        for s14 in &ep.snapshots {
            let dt = ArchiveDatetime::decode14(s14)
                .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
            schedule.push(dt.timestamp());
        }
        let by_snapshot = if ep.snapshot_links.is_empty() {
            Vec::new()
        } else {
            if ep.snapshot_links.len() != ep.snapshots.len() {
                return Err(SimError::InvalidConfig(format!(
                    "{}: snapshot_links must parallel snapshots",
                    ep.uri
                )));
            }
            // Keep the per-snapshot correspondence through sorting.
            let mut paired: Vec<(i64, Vec<String>)> = Vec::new();
            for (ts, links) in schedule.iter().zip(&ep.snapshot_links) {
                paired.push((*ts, normalize_links(links)?));
            }
            paired.sort_by_key(|(ts, _)| *ts);
            if paired.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(SimError::InvalidConfig(format!(
                    "{}: duplicate snapshot datetimes",
                    ep.uri
                )));
            }
            paired.iter().map(|(_, l)| l.clone()).collect()
        };
        schedule.sort_unstable();
        schedule.dedup();
        let default = normalize_links(&ep.links)?;
        samples.push((uri.as_str().to_string(), "fixture".into()));
        pages.insert(
            uri.as_str().to_string(),
            Page { schedule, links: PageLinks::Explicit { default, by_snapshot } },
        );
    }

    let mut archive = SimArchive {
        cfg: cfg.clone(),
        sites,
        pages,
        timemap_faults: Default::default(),
        memento_faults: Default::default(),
        samples,
    };
    materialize_faults(&mut archive)?;
    Ok(archive)
}

fn validate(cfg: &SimConfig) -> Result<(), SimError> {
    let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
    if cfg.n_sites == 0 && cfg.explicit_pages.is_empty() {
        return bad("no sites and no explicit pages");
    }
    if cfg.pages_per_site.0 == 0 || cfg.pages_per_site.0 > cfg.pages_per_site.1 {
        return bad("pages_per_site range invalid");
    }
    if cfg.classes.is_empty() {
        return bad("no sample classes");
    }
    if cfg.era_start >= cfg.era_end {
        return bad("era_start must precede era_end");
    }
    if cfg.base_gap_secs == 0 || cfg.gap_growth < 1.0 {
        return bad("snapshot grid needs base_gap_secs > 0 and gap_growth >= 1");
    }
    if cfg.change_epoch_secs == 0 {
        return bad("change_epoch_secs must be positive");
    }
    if cfg.site_profiles.is_empty() {
        return bad("site_profiles must be non-empty");
    }
    let rates = [
        cfg.snapshot_miss_rate,
        cfg.cross_site_fraction,
        cfg.faults.timemap_403,
        cfg.faults.timemap_503,
        cfg.faults.timemap_other,
        cfg.faults.memento_403,
        cfg.faults.memento_404,
        cfg.faults.memento_503,
        cfg.faults.memento_503_recover,
        cfg.faults.download_failed,
        cfg.faults.not_html,
        cfg.faults.memento_redirect,
        cfg.faults.memento_other,
        cfg.faults.soft_redirect_on_build,
    ];
    if rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return bad("rates must lie in [0, 1]");
    }
    if cfg.classes.iter().any(|c| !(0.0..=1.0).contains(&c.archival_rate)) {
        return bad("archival rates must lie in [0, 1]");
    }
    Ok(())
}

fn page_uri(host: &str, j: usize) -> String {
    if j == 0 {
        format!("http://{host}/")
    } else {
        format!("http://{host}/p{j}")
    }
}

/// Snapshot grid for one page: anchored near the era middle with a
/// per-page phase, gaps growing geometrically outward on both sides, each
/// gap jittered ±40% per page so different pages' grids decorrelate at
/// the local gap scale, each point dropped with the miss rate. Gap growth
/// uses repeated multiplication only, so schedules are bit-stable across
/// platforms.
fn page_schedule(
    cfg: &SimConfig,
    s: usize,
    j: usize,
    gap_multiplier: f64,
    era_start: i64,
    era_end: i64,
    center: i64,
) -> Vec<i64> {
    let g0 = (cfg.base_gap_secs as f64 * gap_multiplier).max(1.0);
    let phase = unit(derive(cfg.seed, "phase", &[s as u64, j as u64]));
    let anchor = center + (phase * g0) as i64;
    let mut schedule = Vec::new();
    let mut push = |t: i64| {
        if t >= era_start && t <= era_end {
            let miss = unit(derive(cfg.seed, "miss", &[s as u64, j as u64, t as u64]));
            if miss >= cfg.snapshot_miss_rate {
                schedule.push(t);
            }
        }
    };
    let jitter = |side: u64, k: u64| {
        0.6 + 0.8 * unit(derive(cfg.seed, "jitter", &[s as u64, j as u64, side, k]))
    };
    let mut gap = g0;
    let mut t = anchor;
    let mut k = 0u64;
    while t <= era_end {
        push(t);
        t += (gap * jitter(0, k)) as i64;
        gap *= cfg.gap_growth;
        k += 1;
    }
    let mut gap = g0;
    let mut t = anchor - (g0 * jitter(1, 0)) as i64;
    let mut k = 1u64;
    while t >= era_start {
        push(t);
        gap *= cfg.gap_growth;
        t -= (gap * jitter(1, k)) as i64;
        k += 1;
    }
    schedule.sort_unstable();
    schedule.dedup();
    schedule
}

fn materialize_faults(archive: &mut SimArchive) -> Result<(), SimError> {
    let cfg = &archive.cfg;
    let f = &cfg.faults;
    let seed = cfg.seed;

    for (uri, page) in &archive.pages {
        let key = fnv1a(uri.as_bytes());
        // Timemap fault: at most one of 403/503/other.
        let roll = unit(derive(seed, "tmfault", &[key]));
        let mut acc = f.timemap_403;
        if roll < acc {
            archive.timemap_faults.insert(uri.clone(), Fault::Http403);
        } else if roll < { acc += f.timemap_503; acc } {
            let recover = unit(derive(seed, "tmrecover", &[key])) < f.memento_503_recover;
            archive.timemap_faults.insert(uri.clone(), Fault::Http503 { recover });
        } else if roll < { acc += f.timemap_other; acc } {
            archive.timemap_faults.insert(uri.clone(), Fault::OtherStatus(500));
        }

        for (i, &ts) in page.schedule.iter().enumerate() {
            let roll = unit(derive(seed, "mfault", &[key, ts as u64]));
            let mut acc = 0.0;
            let mut hit = |rate: f64, roll: f64| {
                let lo = acc;
                acc += rate;
                roll >= lo && roll < acc
            };
            let fault = if hit(f.memento_403, roll) {
                Some(Fault::Http403)
            } else if hit(f.memento_404, roll) {
                Some(Fault::Http404)
            } else if hit(f.memento_503, roll) {
                let recover = unit(derive(seed, "mrecover", &[key, ts as u64])) < f.memento_503_recover;
                Some(Fault::Http503 { recover })
            } else if hit(f.download_failed, roll) {
                Some(Fault::DownloadFailed)
            } else if hit(f.not_html, roll) {
                Some(Fault::NotHtml)
            } else if hit(f.memento_redirect, roll) {
                redirect_target(page, i, seed, key, ts, f.redirect_skip_max).map(|tidx| {
                    Fault::HardRedirect { to_uri: uri.clone(), to_ts: page.schedule[tidx] }
                })
            } else if hit(f.memento_other, roll) {
                Some(Fault::OtherStatus(500))
            } else {
                None
            };
            if let Some(fault) = fault {
                archive.memento_faults.insert((uri.clone(), ts), fault);
            }
        }
    }

    // Explicit faults override rate-derived ones.
    for ef in &cfg.explicit_faults {
        match &ef.scope {
            FaultScope::Timemap { uri } => {
                let uri = OriginalUri::parse(uri)
                    .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
                archive.timemap_faults.insert(uri.as_str().to_string(), ef.fault.clone());
            }
            FaultScope::Memento { uri, datetime } => {
                let uri = OriginalUri::parse(uri)
                    .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
                let ts = ArchiveDatetime::decode14(datetime)
                    .map_err(|e| SimError::InvalidConfig(e.to_string()))?
                    .timestamp();
                archive.memento_faults.insert((uri.as_str().to_string(), ts), ef.fault.clone());
            }
        }
    }
    Ok(())
}

fn redirect_target(
    page: &Page,
    idx: usize,
    seed: u64,
    key: u64,
    ts: i64,
    skip_max: usize,
) -> Option<usize> {
    if page.schedule.len() < 2 {
        return None;
    }
    let h = derive(seed, "mredir", &[key, ts as u64]);
    let skip = 1 + (h % skip_max.max(1) as u64) as usize;
    let target = if h & (1 << 32) != 0 {
        idx.saturating_add(skip).min(page.schedule.len() - 1)
    } else {
        idx.saturating_sub(skip)
    };
    (target != idx).then_some(target).or({
        // Clamped onto itself: fall to the adjacent snapshot.
        if idx + 1 < page.schedule.len() {
            Some(idx + 1)
        } else {
            Some(idx - 1)
        }
    })
}

/// The seed-derived soft-redirect decision for a built (between-snapshot)
/// URI request: whether it fires and which schedule index it skews to,
/// always 1..=soft_skip_max snapshots earlier than nearest. The drift
/// oracle replays exactly this function.
pub(crate) fn soft_build_roll(
    seed: u64,
    rates: &FaultRates,
    r: &str,
    requested_ts: i64,
    schedule: &[i64],
    nearest_idx: usize,
) -> Option<usize> {
    if schedule.len() < 2 || nearest_idx == 0 {
        return None;
    }
    let h = derive(seed, "softbuild", &[fnv1a(r.as_bytes()), requested_ts as u64]);
    if unit(h) >= rates.soft_redirect_on_build {
        return None;
    }
    let h2 = mix64(h);
    let skip = 1 + (h2 % rates.soft_skip_max.max(1) as u64) as usize;
    let target = nearest_idx.saturating_sub(skip);
    (target != nearest_idx).then_some(target)
}

impl SimArchive {
    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn archive_base(&self) -> &str {
        self.cfg.archive_base.trim_end_matches('/')
    }

    /// Sample URIs with their classes: every procedural site's home page
    /// plus every explicit page.
    pub fn samples(&self) -> &[(String, String)] {
        &self.samples
    }

    /// Raw snapshot schedule (unix seconds) of a page, unarchived pages
    /// yielding an empty slice; `None` for URIs outside the corpus.
    pub fn page_schedule(&self, uri: &str) -> Option<&[i64]> {
        self.pages.get(uri).map(|p| p.schedule.as_slice())
    }

    pub fn page_uris(&self) -> impl Iterator<Item = &str> {
        self.pages.keys().map(|s| s.as_str())
    }

    pub(crate) fn memento_fault(&self, uri: &str, ts: i64) -> Option<&Fault> {
        self.memento_faults.get(&(uri.to_string(), ts))
    }

    /// Largest gap between consecutive snapshots of any archived page.
    pub fn max_snapshot_gap_secs(&self) -> u64 {
        let mut max = 0i64;
        for page in self.pages.values() {
            for w in page.schedule.windows(2) {
                max = max.max(w[1] - w[0]);
            }
        }
        max.max(0) as u64
    }

    /// Content hash over the materialized corpus: page schedules, link
    /// models, and fault tables.
    pub fn corpus_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.archive_base().as_bytes());
        h.update([0]);
        for (uri, page) in &self.pages {
            h.update(uri.as_bytes());
            for &ts in &page.schedule {
                h.update(ts.to_be_bytes());
            }
            match &page.links {
                PageLinks::Procedural { site, page_idx } => {
                    h.update(b"proc");
                    h.update((*site as u64).to_be_bytes());
                    h.update((*page_idx as u64).to_be_bytes());
                }
                PageLinks::Explicit { default, by_snapshot } => {
                    h.update(b"expl");
                    for l in default {
                        h.update(l.as_bytes());
                        h.update([0]);
                    }
                    for links in by_snapshot {
                        h.update([1]);
                        for l in links {
                            h.update(l.as_bytes());
                            h.update([0]);
                        }
                    }
                }
            }
        }
        for (uri, fault) in &self.timemap_faults {
            h.update(uri.as_bytes());
            h.update(serde_json::to_vec(fault).unwrap());
        }
        for ((uri, ts), fault) in &self.memento_faults {
            h.update(uri.as_bytes());
            h.update(ts.to_be_bytes());
            h.update(serde_json::to_vec(fault).unwrap());
        }
        hex::encode(h.finalize())
    }

    /// Change-epoch index of an instant.
    fn epoch_of(&self, ts: i64) -> u64 {
        let origin = self.cfg.era_start.timestamp();
        ((ts - origin).max(0) as u64) / self.cfg.change_epoch_secs
    }

    /// Outlink URI-Rs of a page as frozen in the snapshot taken at `ts`:
    /// a persistent core ring plus links re-drawn at each change epoch.
    fn outlinks(&self, uri: &str, page: &Page, ts: i64) -> Vec<String> {
        match &page.links {
            PageLinks::Explicit { default, by_snapshot } => {
                if by_snapshot.is_empty() {
                    return default.clone();
                }
                match page.schedule.binary_search(&ts) {
                    Ok(i) => by_snapshot[i].clone(),
                    Err(_) => default.clone(),
                }
            }
            PageLinks::Procedural { site, page_idx } => {
                let epoch = self.epoch_of(ts);
                let info = &self.sites[*site];
                let seed = self.cfg.seed;
                let mut out = Vec::new();
                let core = if info.hub {
                    self.cfg.hub_site.map(|h| h.links_per_page).unwrap_or(0)
                } else {
                    self.cfg.core_links
                };
                for c in 1..=core {
                    let target = (page_idx + c) % info.n_pages;
                    if target != *page_idx {
                        out.push(page_uri(&info.host, target));
                    }
                }
                if info.hub {
                    return out;
                }
                let key = fnv1a(uri.as_bytes());
                let slots = self.cfg.epoch_links + info.profile.extra_links;
                for slot in 0..slots {
                    let h = derive(seed, "elink", &[key, epoch, slot as u64]);
                    let cross = unit(h) < self.cfg.cross_site_fraction && self.sites.len() > 1;
                    let h2 = mix64(h);
                    if cross {
                        let mut t = (h2 % (self.sites.len() as u64 - 1)) as usize;
                        if t >= *site {
                            t += 1;
                        }
                        let tinfo = &self.sites[t];
                        let tp = (mix64(h2) % tinfo.n_pages as u64) as usize;
                        out.push(page_uri(&tinfo.host, tp));
                    } else {
                        let tp = (h2 % info.n_pages as u64) as usize;
                        if tp != *page_idx {
                            out.push(page_uri(&info.host, tp));
                        }
                    }
                }
                out
            }
        }
    }

    fn memento_uri(&self, uri: &str, ts: i64) -> String {
        let dt = ArchiveDatetime::from_timestamp(ts).unwrap();
        format!("{}/web/{}/{}", self.archive_base(), dt.encode14(), uri)
    }

    /// Memento body: links frozen at the snapshot's epoch, rewritten into
    /// archive replay form (alternating absolute and path-absolute, like
    /// real rewritten pages mix).
    fn body(&self, uri: &str, page: &Page, ts: i64) -> String {
        let dt = ArchiveDatetime::from_timestamp(ts).unwrap();
        let dt14 = dt.encode14();
        let mut html = format!(
            "<html><head><title>{uri}</title></head><body>\n<h1>{uri} at {dt14}</h1>\n"
        );
        for (slot, target) in self.outlinks(uri, page, ts).iter().enumerate() {
            let href = if slot % 2 == 0 {
                format!("{}/web/{dt14}/{target}", self.archive_base())
            } else {
                format!("/web/{dt14}/{target}")
            };
            html.push_str(&format!("<p><a href=\"{href}\">{target}</a></p>\n"));
        }
        html.push_str("</body></html>\n");
        html
    }

    fn timemap_body(&self, uri: &str, page: &Page) -> String {
        let original = OriginalUri::parse(uri).unwrap();
        let mementos = page
            .schedule
            .iter()
            .map(|&ts| MementoUri {
                uri: self.memento_uri(uri, ts),
                datetime: ArchiveDatetime::from_timestamp(ts).unwrap(),
                original: original.clone(),
            })
            .collect();
        write_link_timemap(&TimeMap::new(original, mementos).unwrap())
    }

    /// Serves one request. `attempt` is how many times this URI has been
    /// requested before in the caller's session; it only matters for
    /// one-shot 503 faults.
    pub fn respond(&self, req_uri: &str, attempt: u32) -> Result<RawResponse, TransportError> {
        let base = self.archive_base();
        let Some(path) = req_uri.strip_prefix(base) else {
            return Ok(status(404));
        };

        if let Some(r) = path.strip_prefix("/timemap/link/") {
            match self.timemap_faults.get(r) {
                Some(Fault::Http403) => return Ok(status(403)),
                Some(Fault::Http404) => return Ok(status(404)),
                Some(Fault::Http503 { recover }) => {
                    if !recover || attempt == 0 {
                        return Ok(status(503));
                    }
                }
                Some(Fault::DownloadFailed) => {
                    return Err(TransportError("injected transport failure".into()))
                }
                Some(Fault::OtherStatus(s)) => return Ok(status(*s)),
                Some(_) | None => {}
            }
            return Ok(match self.pages.get(r) {
                Some(page) if !page.schedule.is_empty() => RawResponse {
                    status: 200,
                    content_type: Some("application/link-format".into()),
                    location: None,
                    body: self.timemap_body(r, page).into_bytes(),
                },
                _ => status(404),
            });
        }

        if let Some(rest) = path.strip_prefix("/web/") {
            let digits = rest.bytes().take_while(|b| b.is_ascii_digit()).count();
            if digits != 14 || rest.as_bytes().get(14) != Some(&b'/') {
                return Ok(status(404));
            }
            let Ok(dt) = ArchiveDatetime::decode14(&rest[..14]) else {
                return Ok(status(404));
            };
            let r = &rest[15..];
            let Some(page) = self.pages.get(r) else {
                return Ok(status(404));
            };
            if page.schedule.is_empty() {
                return Ok(status(404));
            }
            let ts = dt.timestamp();
            return match page.schedule.binary_search(&ts) {
                Ok(_) => self.respond_exact(r, page, ts, attempt),
                Err(_) => Ok(self.respond_built(r, page, ts)),
            };
        }

        Ok(status(404))
    }

    fn respond_exact(
        &self,
        r: &str,
        page: &Page,
        ts: i64,
        attempt: u32,
    ) -> Result<RawResponse, TransportError> {
        match self.memento_faults.get(&(r.to_string(), ts)) {
            Some(Fault::Http403) => return Ok(status(403)),
            Some(Fault::Http404) => return Ok(status(404)),
            Some(Fault::Http503 { recover }) => {
                if !recover || attempt == 0 {
                    return Ok(status(503));
                }
            }
            Some(Fault::DownloadFailed) => {
                return Err(TransportError("injected transport failure".into()))
            }
            Some(Fault::NotHtml) => {
                return Ok(RawResponse {
                    status: 200,
                    content_type: Some("application/octet-stream".into()),
                    location: None,
                    body: b"%BIN not hypertext".to_vec(),
                })
            }
            Some(Fault::HardRedirect { to_uri, to_ts }) => {
                return Ok(redirect(self.memento_uri(to_uri, *to_ts)))
            }
            Some(Fault::SoftRedirect { to_uri, to_ts }) => {
                return Ok(soft_redirect_page(&self.memento_uri(to_uri, *to_ts)))
            }
            Some(Fault::OtherStatus(s)) => return Ok(status(*s)),
            None => {}
        }
        Ok(RawResponse {
            status: 200,
            content_type: Some("text/html; charset=utf-8".into()),
            location: None,
            body: self.body(r, page, ts).into_bytes(),
        })
    }

    /// A request for a datetime the archive has no snapshot at: redirect
    /// to the nearest snapshot (ties to the earlier one), occasionally as
    /// a script redirect skewed a few snapshots off.
    fn respond_built(&self, r: &str, page: &Page, ts: i64) -> RawResponse {
        let nearest = nearest_index(&page.schedule, ts);
        if let Some(skewed) =
            soft_build_roll(self.cfg.seed, &self.cfg.faults, r, ts, &page.schedule, nearest)
        {
            return soft_redirect_page(&self.memento_uri(r, page.schedule[skewed]));
        }
        redirect(self.memento_uri(r, page.schedule[nearest]))
    }
}

/// Index of the schedule entry nearest `ts`; ties go to the earlier entry.
pub(crate) fn nearest_index(schedule: &[i64], ts: i64) -> usize {
    let mut best = 0;
    let mut best_d = i64::MAX;
    for (i, &s) in schedule.iter().enumerate() {
        let d = (s - ts).abs();
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

fn status(code: u16) -> RawResponse {
    RawResponse { status: code, content_type: None, location: None, body: Vec::new() }
}

fn redirect(to: String) -> RawResponse {
    RawResponse { status: 301, content_type: None, location: Some(to), body: Vec::new() }
}

fn soft_redirect_page(to: &str) -> RawResponse {
    let body = format!(
        "<html><head><title>redirecting</title></head><body>\
         <script>window.location.replace(\"{to}\");</script></body></html>\n"
    );
    RawResponse {
        status: 200,
        content_type: Some("text/html; charset=utf-8".into()),
        location: None,
        body: body.into_bytes(),
    }
}

/// In-process backend over a generated archive.
pub struct SimBackend {
    archive: Arc<SimArchive>,
}

impl SimBackend {
    pub fn new(archive: Arc<SimArchive>) -> Self {
        SimBackend { archive }
    }

    pub fn archive(&self) -> &Arc<SimArchive> {
        &self.archive
    }
}

impl Backend for SimBackend {
    fn archive_base(&self) -> &str {
        self.archive.archive_base()
    }

    fn session(&self) -> Box<dyn BackendSession> {
        Box::new(SimSession { archive: Arc::clone(&self.archive), attempts: HashMap::new() })
    }
}

/// Per-walk session: request counts live here so one-shot 503s behave
/// identically no matter how many walks run in parallel.
struct SimSession {
    archive: Arc<SimArchive>,
    attempts: HashMap<String, u32>,
}

impl BackendSession for SimSession {
    fn get(&mut self, uri: &str) -> Result<RawResponse, TransportError> {
        let n = self.attempts.entry(uri.to_string()).or_insert(0);
        let attempt = *n;
        *n += 1;
        self.archive.respond(uri, attempt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::OutcomeKind;
    use crate::client::{ArchiveClient, ClientConfig};
    use std::time::Duration;

    fn client_for(archive: Arc<SimArchive>) -> ArchiveClient {
        let backend = SimBackend::new(archive);
        ArchiveClient::new(
            &backend,
            ClientConfig { retry_delay: Duration::from_millis(0), ..Default::default() },
        )
    }

    fn single_page_cfg(snapshots: &[&str]) -> SimConfig {
        let mut cfg = SimConfig::bare(5);
        cfg.explicit_pages = vec![ExplicitPage::new("http://one.test/", snapshots, &[])];
        cfg
    }

    #[test]
    fn single_page_three_snapshots_yields_timemap_of_three() {
        let archive =
            Arc::new(generate(&single_page_cfg(&["20050101000000", "20060101000000", "20070101000000"])).unwrap());
        let r = OriginalUri::parse("http://one.test/").unwrap();
        let tm = client_for(archive).fetch_timemap(&r).unwrap();
        assert_eq!(tm.len(), 3);
        assert_eq!(tm.mementos()[0].datetime.encode14(), "20050101000000");
    }

    #[test]
    fn unarchived_page_timemap_is_404() {
        let archive = Arc::new(generate(&single_page_cfg(&[])).unwrap());
        let r = OriginalUri::parse("http://one.test/").unwrap();
        let err = client_for(archive).fetch_timemap(&r).unwrap_err();
        assert_eq!(err.kind, OutcomeKind::Http404);
    }

    #[test]
    fn same_seed_twice_is_byte_identical() {
        let cfg = default_campaign(11);
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.corpus_hash(), b.corpus_hash());

        let c = generate(&default_campaign(12)).unwrap();
        assert_ne!(a.corpus_hash(), c.corpus_hash());
    }

    #[test]
    fn archival_rate_is_respected_binomially() {
        let mut cfg = SimConfig::bare(3);
        cfg.n_sites = 125;
        cfg.pages_per_site = (8, 8);
        cfg.classes = vec![ClassConfig { name: "half".into(), archival_rate: 0.5 }];
        let archive = generate(&cfg).unwrap();
        let total = archive.pages.len();
        let archived = archive.pages.values().filter(|p| !p.schedule.is_empty()).count();
        assert_eq!(total, 1000);
        // ~500 expected; 4-sigma tolerance for a binomial(1000, 0.5).
        assert!((archived as i64 - 500).abs() < 64, "archived = {archived}");
    }

    #[test]
    fn exact_snapshot_serves_frozen_body() {
        let archive =
            Arc::new(generate(&single_page_cfg(&["20050101000000", "20060101000000"])).unwrap());
        let resp = archive
            .respond("http://archive.sim/web/20050101000000/http://one.test/", 0)
            .unwrap();
        assert_eq!(resp.status, 200);
        let body = String::from_utf8(resp.body).unwrap();
        assert!(body.contains("http://one.test/ at 20050101000000"));
    }

    #[test]
    fn between_snapshot_request_redirects_to_nearest() {
        let archive =
            Arc::new(generate(&single_page_cfg(&["20050101000000", "20060101000000"])).unwrap());
        // 2005-03-01 is 59 days after the first snapshot, 306 before the second.
        let resp = archive
            .respond("http://archive.sim/web/20050301000000/http://one.test/", 0)
            .unwrap();
        assert_eq!(resp.status, 301);
        assert_eq!(
            resp.location.unwrap(),
            "http://archive.sim/web/20050101000000/http://one.test/"
        );
    }

    #[test]
    fn nearest_index_breaks_ties_earlier() {
        assert_eq!(nearest_index(&[0, 100], 50), 0);
        assert_eq!(nearest_index(&[0, 100], 51), 1);
        assert_eq!(nearest_index(&[0, 100, 200], 140), 1);
        assert_eq!(nearest_index(&[0, 100, 200], 160), 2);
    }

    #[test]
    fn injected_soft_redirect_serves_script_page() {
        let mut cfg = single_page_cfg(&["20050101000000", "20060101000000"]);
        cfg.explicit_faults = vec![ExplicitFault {
            scope: FaultScope::Memento {
                uri: "http://one.test/".into(),
                datetime: "20050101000000".into(),
            },
            fault: Fault::SoftRedirect {
                to_uri: "http://one.test/".into(),
                to_ts: ArchiveDatetime::decode14("20060101000000").unwrap().timestamp(),
            },
        }];
        let archive = Arc::new(generate(&cfg).unwrap());
        let resp = archive
            .respond("http://archive.sim/web/20050101000000/http://one.test/", 0)
            .unwrap();
        assert_eq!(resp.status, 200);
        let body = String::from_utf8(resp.body).unwrap();
        assert!(body.contains("window.location.replace"));
        assert!(body.contains("/web/20060101000000/"));
    }

    #[test]
    fn one_shot_503_recovers_within_a_session_only_once() {
        let mut cfg = single_page_cfg(&["20050101000000"]);
        cfg.explicit_faults = vec![ExplicitFault {
            scope: FaultScope::Timemap { uri: "http://one.test/".into() },
            fault: Fault::Http503 { recover: true },
        }];
        let archive = Arc::new(generate(&cfg).unwrap());
        let uri = "http://archive.sim/timemap/link/http://one.test/";
        assert_eq!(archive.respond(uri, 0).unwrap().status, 503);
        assert_eq!(archive.respond(uri, 1).unwrap().status, 200);

        // Through the client: transparent after one retry.
        let r = OriginalUri::parse("http://one.test/").unwrap();
        let tm = client_for(archive).fetch_timemap(&r).unwrap();
        assert_eq!(tm.len(), 1);
    }

    #[test]
    fn every_served_memento_uri_parses_back() {
        let cfg = default_campaign(4);
        let archive = generate(&cfg).unwrap();
        for (uri, page) in archive.pages.iter().take(50) {
            for &ts in page.schedule.iter().take(3) {
                let m = archive.memento_uri(uri, ts);
                let (dt, r) = crate::memento::parse_wayback_uri(&m).unwrap();
                assert_eq!(dt.timestamp(), ts);
                assert_eq!(r.as_str(), uri);
            }
        }
    }

    #[test]
    fn timemap_datetimes_equal_schedule() {
        let cfg = default_campaign(4);
        let archive = Arc::new(generate(&cfg).unwrap());
        let (uri, _) = archive
            .pages
            .iter()
            .find(|(_, p)| !p.schedule.is_empty())
            .map(|(u, p)| (u.clone(), p.clone()))
            .unwrap();
        let r = OriginalUri::parse(&uri).unwrap();
        let schedule: Vec<i64> = archive.page_schedule(&uri).unwrap().to_vec();

        // Bypass faults by reading the generated body directly.
        let page = archive.pages.get(&uri).unwrap();
        let tm = crate::timemap_link::parse_link_timemap(&archive.timemap_body(&uri, page)).unwrap();
        assert_eq!(tm.original(), &r);
        let dts: Vec<i64> = tm.mementos().iter().map(|m| m.datetime.timestamp()).collect();
        assert_eq!(dts, schedule);
    }

    #[test]
    fn links_differ_across_epochs_but_core_persists() {
        let mut cfg = default_campaign(9);
        cfg.faults = FaultRates::none();
        let archive = generate(&cfg).unwrap();
        let (uri, page) = archive
            .pages
            .iter()
            .find(|(_, p)| matches!(p.links, PageLinks::Procedural { .. }) && p.schedule.len() > 4)
            .unwrap();
        let era_start = cfg.era_start.timestamp();
        let early = archive.outlinks(uri, page, era_start + 1);
        let late = archive.outlinks(uri, page, era_start + 20 * cfg.change_epoch_secs as i64 + 1);
        assert_ne!(early, late, "epoch links should vary");
        let core = cfg.core_links.min(early.len());
        assert_eq!(early[..core], late[..core], "core links persist");
    }

    #[test]
    fn hub_site_pages_interlink_densely() {
        let mut cfg = default_campaign(2);
        cfg.hub_site = Some(HubConfig { pages: 40, links_per_page: 25 });
        let archive = generate(&cfg).unwrap();
        let page = archive.pages.get("http://hub.sim/").unwrap();
        let links = archive.outlinks("http://hub.sim/", page, 0);
        assert_eq!(links.len(), 25);
        assert!(links.iter().all(|l| l.contains("hub.sim")));
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = SimConfig::bare(1);
        assert!(generate(&cfg).is_err()); // no pages at all
        cfg.n_sites = 1;
        cfg.gap_growth = 0.9;
        assert!(generate(&cfg).is_err());
        cfg.gap_growth = 1.2;
        cfg.snapshot_miss_rate = 1.5;
        assert!(generate(&cfg).is_err());
    }
}
