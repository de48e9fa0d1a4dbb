//! Aggregation of walk records into drift series, length and stop-cause
//! tables, and the campaign summary.
//!
//! Conventions, pinned so reports are reproducible byte-for-byte:
//! median is the lower of the two central order statistics for even
//! counts; standard deviation is the population form; a year is 365.25
//! days; day values are seconds / 86,400.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::walk::{Stage, StopKind, Walk, WalkEnd, WalkStep};

pub const SECS_PER_DAY: f64 = 86_400.0;
pub const SECS_PER_YEAR: u64 = 31_557_600; // 365.25 days

/// Aggregates of one policy's drift samples within a group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyStats {
    pub count: u64,
    pub mean_secs: f64,
    /// Lower median: an actual sample, exact at second precision.
    pub median_secs: u64,
    pub sd_secs: f64,
}

impl PolicyStats {
    fn from_samples(mut xs: Vec<u64>) -> Self {
        let count = xs.len() as u64;
        if count == 0 {
            return PolicyStats { count: 0, mean_secs: 0.0, median_secs: 0, sd_secs: 0.0 };
        }
        xs.sort_unstable();
        let median_secs = xs[(xs.len() - 1) / 2];
        let mean_secs = xs.iter().map(|&x| x as f64).sum::<f64>() / count as f64;
        let var = xs.iter().map(|&x| (x as f64 - mean_secs).powi(2)).sum::<f64>() / count as f64;
        PolicyStats { count, mean_secs, median_secs, sd_secs: var.sqrt() }
    }

    pub fn mean_days(&self) -> f64 {
        self.mean_secs / SECS_PER_DAY
    }

    pub fn median_days(&self) -> f64 {
        self.median_secs as f64 / SECS_PER_DAY
    }

    pub fn sd_days(&self) -> f64 {
        self.sd_secs / SECS_PER_DAY
    }
}

/// One group of a drift series: both policies' aggregates side by side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftRow {
    pub key: u64,
    pub api: PolicyStats,
    pub ui: PolicyStats,
}

fn drift_rows(groups: BTreeMap<u64, (Vec<u64>, Vec<u64>)>) -> Vec<DriftRow> {
    groups
        .into_iter()
        .map(|(key, (api, ui))| DriftRow {
            key,
            api: PolicyStats::from_samples(api),
            ui: PolicyStats::from_samples(ui),
        })
        .collect()
}

fn successful_steps(walks: &[Walk]) -> impl Iterator<Item = (&Walk, &WalkStep)> {
    walks.iter().flat_map(|w| w.successful_steps().map(move |s| (w, s)))
}

/// Per-policy drift aggregates grouped by step index.
pub fn drift_by_step(walks: &[Walk]) -> Vec<DriftRow> {
    let mut groups: BTreeMap<u64, (Vec<u64>, Vec<u64>)> = BTreeMap::new();
    for (_, s) in successful_steps(walks) {
        let g = groups.entry(s.index as u64).or_default();
        g.0.push(s.drift_api.unwrap().as_secs());
        g.1.push(s.drift_ui.unwrap().as_secs());
    }
    drift_rows(groups)
}

/// Per-policy drift aggregates grouped by choice (steps 2+ only; step 1
/// has no choice). `bucket` widths above 1 floor the choice value to its
/// bucket start.
pub fn drift_by_choice(walks: &[Walk], bucket: u32) -> Vec<DriftRow> {
    let bucket = bucket.max(1) as u64;
    let mut groups: BTreeMap<u64, (Vec<u64>, Vec<u64>)> = BTreeMap::new();
    for (_, s) in successful_steps(walks) {
        if s.index < 2 {
            continue;
        }
        let key = (s.choice as u64 / bucket) * bucket;
        let g = groups.entry(key).or_default();
        g.0.push(s.drift_api.unwrap().as_secs());
        g.1.push(s.drift_ui.unwrap().as_secs());
    }
    drift_rows(groups)
}

/// Per-policy drift aggregates grouped by how many distinct hosts the
/// walk visited in total; each group pools all its walks' step drifts.
pub fn drift_by_domains(walks: &[Walk]) -> Vec<DriftRow> {
    let mut groups: BTreeMap<u64, (Vec<u64>, Vec<u64>)> = BTreeMap::new();
    for w in walks {
        if w.length == 0 {
            continue;
        }
        let g = groups.entry(w.domain_count() as u64).or_default();
        for s in w.successful_steps() {
            g.0.push(s.drift_api.unwrap().as_secs());
            g.1.push(s.drift_ui.unwrap().as_secs());
        }
    }
    drift_rows(groups)
}

/// Walk counts by length, per sample class: lengths 1–25 individually,
/// then 26–30 through 46–50 in fives, and a totals row. Zero-length walks
/// are not occurrences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthTable {
    pub classes: Vec<String>,
    pub rows: Vec<LengthRow>,
    pub class_totals: Vec<u64>,
    pub grand_total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthRow {
    pub label: String,
    pub counts: Vec<u64>,
    pub total: u64,
}

const UNCLASSIFIED: &str = "unclassified";

fn class_of(w: &Walk) -> String {
    w.sample_class.clone().unwrap_or_else(|| UNCLASSIFIED.to_string())
}

pub fn occurrences_by_length(walks: &[Walk]) -> LengthTable {
    let mut classes: Vec<String> = walks.iter().map(class_of).collect();
    classes.sort_unstable();
    classes.dedup();

    let bucket_of = |len: u32| -> Option<usize> {
        match len {
            0 => None,
            1..=25 => Some(len as usize - 1),
            26..=50 => Some(25 + ((len as usize - 26) / 5)),
            _ => Some(29),
        }
    };
    let labels: Vec<String> = (1..=25)
        .map(|l| l.to_string())
        .chain((0..5).map(|b| format!("{}-{}", 26 + b * 5, 30 + b * 5)))
        .collect();

    let mut counts = vec![vec![0u64; classes.len()]; labels.len()];
    for w in walks {
        if let Some(bucket) = bucket_of(w.length) {
            let class_idx = classes.iter().position(|c| *c == class_of(w)).unwrap();
            counts[bucket][class_idx] += 1;
        }
    }

    let rows: Vec<LengthRow> = labels
        .into_iter()
        .zip(counts)
        .map(|(label, counts)| {
            let total = counts.iter().sum();
            LengthRow { label, counts, total }
        })
        .collect();
    let class_totals: Vec<u64> =
        (0..classes.len()).map(|i| rows.iter().map(|r| r.counts[i]).sum()).collect();
    let grand_total = rows.iter().map(|r| r.total).sum();
    LengthTable { classes, rows, class_totals, grand_total }
}

/// Stop causes split first step vs. other steps, and timemap vs. memento
/// stage, with percentages of each split's total. Walks that completed
/// the step cap have no stop cause and appear in neither split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopCauseTable {
    pub first: Vec<StopRow>,
    pub other: Vec<StopRow>,
    pub first_total: u64,
    pub other_total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopRow {
    pub stage: Stage,
    pub kind: StopKind,
    pub count: u64,
    pub pct: f64,
}

/// The closed row layout of the stop-cause table.
pub const STOP_ROWS: &[(Stage, StopKind)] = &[
    (Stage::Timemap, StopKind::Http403),
    (Stage::Timemap, StopKind::Http404),
    (Stage::Timemap, StopKind::Http503),
    (Stage::Timemap, StopKind::Other),
    (Stage::Memento, StopKind::Http403),
    (Stage::Memento, StopKind::Http404),
    (Stage::Memento, StopKind::Http503),
    (Stage::Memento, StopKind::DownloadFailed),
    (Stage::Memento, StopKind::NotHtml),
    (Stage::Memento, StopKind::NoCommonLinks),
    (Stage::Memento, StopKind::Other),
];

pub fn stop_causes(walks: &[Walk]) -> StopCauseTable {
    let mut first: BTreeMap<usize, u64> = BTreeMap::new();
    let mut other: BTreeMap<usize, u64> = BTreeMap::new();
    for w in walks {
        let WalkEnd::Stopped(cause) = &w.end else { continue };
        let row = STOP_ROWS
            .iter()
            .position(|(st, k)| st == &cause.stage && k == &cause.kind)
            .expect("stop cause outside taxonomy");
        let stopped_at = w.steps.last().map(|s| s.index).unwrap_or(1);
        *(if stopped_at == 1 { &mut first } else { &mut other }).entry(row).or_default() += 1;
    }
    let build = |m: BTreeMap<usize, u64>| -> (Vec<StopRow>, u64) {
        let total: u64 = m.values().sum();
        let rows = STOP_ROWS
            .iter()
            .enumerate()
            .map(|(i, (stage, kind))| {
                let count = m.get(&i).copied().unwrap_or(0);
                let pct = if total == 0 { 0.0 } else { count as f64 / total as f64 * 100.0 };
                StopRow { stage: *stage, kind: *kind, count, pct }
            })
            .collect();
        (rows, total)
    };
    let (first, first_total) = build(first);
    let (other, other_total) = build(other);
    StopCauseTable { first, other, first_total, other_total }
}

/// The campaign-level roll-up, per sample class and total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    /// All recorded steps, including the failed ones.
    pub steps: u64,
    pub succ_steps: u64,
    /// Successful steps whose sliding drift exceeds one year.
    pub ui_over_1yr: u64,
    pub ui_over_5yr: u64,
    pub unique_walks: u64,
    /// Walks with at least one successful step.
    pub succ_walks: u64,
    pub pct_succ: f64,
    /// Successful steps per successful walk.
    pub mean_succ_steps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub attempted: u64,
    pub per_class: BTreeMap<String, SummaryRow>,
    pub total: SummaryRow,
}

fn summarize_group<'a>(walks: impl Iterator<Item = &'a Walk>) -> SummaryRow {
    let mut row = SummaryRow {
        steps: 0,
        succ_steps: 0,
        ui_over_1yr: 0,
        ui_over_5yr: 0,
        unique_walks: 0,
        succ_walks: 0,
        pct_succ: 0.0,
        mean_succ_steps: 0.0,
    };
    for w in walks {
        row.unique_walks += 1;
        row.steps += w.steps.len() as u64;
        row.succ_steps += w.length as u64;
        if w.length > 0 {
            row.succ_walks += 1;
        }
        for s in w.successful_steps() {
            let ui = s.drift_ui.unwrap().as_secs();
            if ui > SECS_PER_YEAR {
                row.ui_over_1yr += 1;
            }
            if ui > 5 * SECS_PER_YEAR {
                row.ui_over_5yr += 1;
            }
        }
    }
    if row.unique_walks > 0 {
        row.pct_succ = row.succ_walks as f64 / row.unique_walks as f64 * 100.0;
    }
    if row.succ_walks > 0 {
        row.mean_succ_steps = row.succ_steps as f64 / row.succ_walks as f64;
    }
    row
}

/// Summarizes deduplicated walks. `attempted` is the pre-dedup count.
pub fn summarize(walks: &[Walk], attempted: u64) -> CampaignSummary {
    let mut classes: Vec<String> = walks.iter().map(class_of).collect();
    classes.sort_unstable();
    classes.dedup();
    let per_class = classes
        .into_iter()
        .map(|c| {
            let row = summarize_group(walks.iter().filter(|w| class_of(w) == c));
            (c, row)
        })
        .collect();
    CampaignSummary { attempted, per_class, total: summarize_group(walks.iter()) }
}

/// Spearman rank correlation with average ranks for ties. Returns 0 when
/// either side is constant or fewer than two points are given.
pub fn spearman(pairs: &[(f64, f64)]) -> f64 {
    if pairs.len() < 2 {
        return 0.0;
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    pearson(&ranks(&xs), &ranks(&ys))
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        // Average rank over the tie run, 1-based.
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx).powi(2);
        vy += (y - my).powi(2);
    }
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}
