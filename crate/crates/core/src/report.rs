//! Walk-record files and the report bundle.
//!
//! Records are line-delimited JSON: a `meta` line (schema version, config
//! echo, corpus hash) followed by one `walk` line per attempted walk, in
//! seed order. Campaigns resume by skipping seeds already present.
//!
//! A report bundle is a directory of fixed-name artifacts rebuilt
//! deterministically from the records:
//!
//! - `report.json` — everything below plus the config echo and corpus hash
//! - `drift_by_step.csv`, `drift_by_choice.csv`, `drift_by_domains.csv` —
//!   `<key>,api_count,api_mean_days,api_median_days,api_sd_days,api_mean_secs,api_median_secs,api_sd_secs,ui_...`
//! - `occurrences_by_length.csv` — `length,<class...>,total`
//! - `stop_causes.csv` — `split,stage,cause,count,percent`
//! - `summary.csv` — `class,steps,succ_steps,ui_over_1yr,ui_over_5yr,unique_walks,succ_walks,pct_succ,mean_succ_steps`
//! - `long.csv` — plot-ready long form: `table,group,policy,statistic,value`
//!
//! Days print with two decimals, seconds means/deviations with three,
//! percentages with one; medians are exact integer seconds.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{
    self, CampaignSummary, DriftRow, LengthTable, StopCauseTable,
};
use crate::walk::{dedup_walks, Stage, StopKind, Walk};

pub const RECORD_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad record line {line}: {err}")]
    BadRecord { line: usize, err: String },
    #[error("record file has no meta line")]
    MissingMeta,
    #[error("unsupported record version {0}")]
    Version(u32),
}

/// First line of a record file: schema version, an echo of the campaign
/// configuration, and the corpus hash walks ran against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaRecord {
    pub v: u32,
    pub config: serde_json::Value,
    pub corpus_hash: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Record {
    Meta(MetaRecord),
    Walk(Box<Walk>),
}

pub fn write_records(path: &Path, meta: &MetaRecord, walks: &[Walk]) -> Result<(), ReportError> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "{}", serde_json::to_string(&Record::Meta(meta.clone())).unwrap())?;
    for w in walks {
        writeln!(f, "{}", serde_json::to_string(&Record::Walk(Box::new(w.clone()))).unwrap())?;
    }
    Ok(())
}

pub fn append_walks(path: &Path, walks: &[Walk]) -> Result<(), ReportError> {
    let mut f = fs::OpenOptions::new().append(true).open(path)?;
    for w in walks {
        writeln!(f, "{}", serde_json::to_string(&Record::Walk(Box::new(w.clone()))).unwrap())?;
    }
    Ok(())
}

/// Reads one record file. The meta line is required and must come first.
pub fn read_records(path: &Path) -> Result<(MetaRecord, Vec<Walk>), ReportError> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut meta = None;
    let mut walks = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line)
            .map_err(|e| ReportError::BadRecord { line: i + 1, err: e.to_string() })?;
        match record {
            Record::Meta(m) => {
                if m.v != RECORD_VERSION {
                    return Err(ReportError::Version(m.v));
                }
                meta.get_or_insert(m);
            }
            Record::Walk(w) => walks.push(*w),
        }
    }
    Ok((meta.ok_or(ReportError::MissingMeta)?, walks))
}

/// Reads and concatenates several record files; the first file's meta
/// wins, later duplicates are merged out downstream by fingerprint.
pub fn read_many(paths: &[&Path]) -> Result<(MetaRecord, Vec<Walk>), ReportError> {
    let mut meta: Option<MetaRecord> = None;
    let mut walks = Vec::new();
    for p in paths {
        let (m, mut w) = read_records(p)?;
        meta.get_or_insert(m);
        walks.append(&mut w);
    }
    Ok((meta.ok_or(ReportError::MissingMeta)?, walks))
}

/// Seeds already present in a record file, for campaign resume.
pub fn recorded_seeds(path: &Path) -> Result<HashSet<u64>, ReportError> {
    if !path.exists() {
        return Ok(HashSet::new());
    }
    let (_, walks) = read_records(path)?;
    Ok(walks.iter().map(|w| w.seed).collect())
}

/// Everything a campaign reports, computed from deduplicated walks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub config: serde_json::Value,
    pub corpus_hash: String,
    pub summary: CampaignSummary,
    pub drift_by_step: Vec<DriftRow>,
    pub drift_by_choice: Vec<DriftRow>,
    pub drift_by_domains: Vec<DriftRow>,
    pub occurrences_by_length: LengthTable,
    pub stop_causes: StopCauseTable,
}

/// Builds the report from raw (pre-dedup) walks.
pub fn build_report(meta: &MetaRecord, walks: Vec<Walk>) -> Report {
    let attempted = walks.len() as u64;
    let unique = dedup_walks(walks);
    Report {
        config: meta.config.clone(),
        corpus_hash: meta.corpus_hash.clone(),
        summary: stats::summarize(&unique, attempted),
        drift_by_step: stats::drift_by_step(&unique),
        drift_by_choice: stats::drift_by_choice(&unique, 1),
        drift_by_domains: stats::drift_by_domains(&unique),
        occurrences_by_length: stats::occurrences_by_length(&unique),
        stop_causes: stats::stop_causes(&unique),
    }
}

fn stage_name(stage: Stage) -> &'static str {
    match stage {
        Stage::Timemap => "timemap",
        Stage::Memento => "memento",
    }
}

fn kind_name(kind: StopKind) -> &'static str {
    match kind {
        StopKind::Http403 => "http_403",
        StopKind::Http404 => "http_404",
        StopKind::Http503 => "http_503",
        StopKind::DownloadFailed => "download_failed",
        StopKind::NotHtml => "not_html",
        StopKind::NoCommonLinks => "no_common_links",
        StopKind::Other => "other",
    }
}

fn drift_csv(rows: &[DriftRow], key_name: &str) -> String {
    let mut out = format!(
        "{key_name},api_count,api_mean_days,api_median_days,api_sd_days,api_mean_secs,\
         api_median_secs,api_sd_secs,ui_count,ui_mean_days,ui_median_days,ui_sd_days,\
         ui_mean_secs,ui_median_secs,ui_sd_secs\n"
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.2},{:.2},{:.2},{:.3},{},{:.3},{},{:.2},{:.2},{:.2},{:.3},{},{:.3}\n",
            r.key,
            r.api.count,
            r.api.mean_days(),
            r.api.median_days(),
            r.api.sd_days(),
            r.api.mean_secs,
            r.api.median_secs,
            r.api.sd_secs,
            r.ui.count,
            r.ui.mean_days(),
            r.ui.median_days(),
            r.ui.sd_days(),
            r.ui.mean_secs,
            r.ui.median_secs,
            r.ui.sd_secs,
        ));
    }
    out
}

fn long_csv(report: &Report) -> String {
    let mut out = String::from("table,group,policy,statistic,value\n");
    let tables = [
        ("drift_by_step", &report.drift_by_step),
        ("drift_by_choice", &report.drift_by_choice),
        ("drift_by_domains", &report.drift_by_domains),
    ];
    for (name, rows) in tables {
        for r in rows.iter() {
            for (policy, s) in [("api", &r.api), ("ui", &r.ui)] {
                out.push_str(&format!("{name},{},{policy},count,{}\n", r.key, s.count));
                out.push_str(&format!("{name},{},{policy},mean_days,{:.2}\n", r.key, s.mean_days()));
                out.push_str(&format!("{name},{},{policy},median_days,{:.2}\n", r.key, s.median_days()));
                out.push_str(&format!("{name},{},{policy},sd_days,{:.2}\n", r.key, s.sd_days()));
                out.push_str(&format!("{name},{},{policy},mean_secs,{:.3}\n", r.key, s.mean_secs));
                out.push_str(&format!("{name},{},{policy},median_secs,{}\n", r.key, s.median_secs));
                out.push_str(&format!("{name},{},{policy},sd_secs,{:.3}\n", r.key, s.sd_secs));
            }
        }
    }
    out
}

fn length_csv(t: &LengthTable) -> String {
    let mut out = String::from("length");
    for c in &t.classes {
        out.push_str(&format!(",{c}"));
    }
    out.push_str(",total\n");
    for row in &t.rows {
        out.push_str(&row.label);
        for c in &row.counts {
            out.push_str(&format!(",{c}"));
        }
        out.push_str(&format!(",{}\n", row.total));
    }
    out.push_str("totals");
    for c in &t.class_totals {
        out.push_str(&format!(",{c}"));
    }
    out.push_str(&format!(",{}\n", t.grand_total));
    out
}

fn stop_csv(t: &StopCauseTable) -> String {
    let mut out = String::from("split,stage,cause,count,percent\n");
    for (split, rows) in [("first_step", &t.first), ("other_steps", &t.other)] {
        for r in rows {
            out.push_str(&format!(
                "{split},{},{},{},{:.1}\n",
                stage_name(r.stage),
                kind_name(r.kind),
                r.count,
                r.pct
            ));
        }
    }
    out
}

fn summary_csv(s: &CampaignSummary) -> String {
    let mut out = String::from(
        "class,steps,succ_steps,ui_over_1yr,ui_over_5yr,unique_walks,succ_walks,pct_succ,mean_succ_steps\n",
    );
    let mut line = |name: &str, r: &stats::SummaryRow| {
        out.push_str(&format!(
            "{name},{},{},{},{},{},{},{:.1},{:.2}\n",
            r.steps,
            r.succ_steps,
            r.ui_over_1yr,
            r.ui_over_5yr,
            r.unique_walks,
            r.succ_walks,
            r.pct_succ,
            r.mean_succ_steps
        ));
    };
    for (class, row) in &s.per_class {
        line(class, row);
    }
    line("total", &s.total);
    out
}

/// Writes the full bundle into `dir` (created if missing).
pub fn write_report_bundle(dir: &Path, report: &Report) -> Result<(), ReportError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(report).unwrap())?;
    fs::write(dir.join("drift_by_step.csv"), drift_csv(&report.drift_by_step, "step"))?;
    fs::write(dir.join("drift_by_choice.csv"), drift_csv(&report.drift_by_choice, "choice"))?;
    fs::write(dir.join("drift_by_domains.csv"), drift_csv(&report.drift_by_domains, "domains"))?;
    fs::write(dir.join("occurrences_by_length.csv"), length_csv(&report.occurrences_by_length))?;
    fs::write(dir.join("stop_causes.csv"), stop_csv(&report.stop_causes))?;
    fs::write(dir.join("summary.csv"), summary_csv(&report.summary))?;
    fs::write(dir.join("long.csv"), long_csv(report))?;
    Ok(())
}

pub const BUNDLE_FILES: &[&str] = &[
    "report.json",
    "drift_by_step.csv",
    "drift_by_choice.csv",
    "drift_by_domains.csv",
    "occurrences_by_length.csv",
    "stop_causes.csv",
    "summary.csv",
    "long.csv",
];
