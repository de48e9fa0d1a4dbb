//! The three-phase acyclic walk engine.
//!
//! A walk is fully determined by its 64-bit seed, the walk config, and the
//! backend's state: the seed drives every random selection, sets are
//! always indexed in lexicographic order, and both policies run in
//! lockstep over the same link choices. Walks never revisit a URI-R.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::client::{
    ArchiveClient, Backend, ClientConfig, DereferenceChain, FetchOutcome, HopKind, OutcomeKind,
};
use crate::extract::{common_usable, extract_links, relaxed_pair, ExtractOptions, LinkSet};
use crate::memento::{
    build_wayback_uri, compute_drift, ArchiveDatetime, Drift, MementoError, OriginalUri,
};
use crate::rng::WalkRng;

/// A starting URI-R, optionally tagged with its sample class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub uri: OriginalUri,
    pub class: Option<String>,
}

/// Parses a samples file: one URI per line, optionally followed by a
/// whitespace-separated class name. `#` lines and blank lines are skipped.
pub fn parse_samples(text: &str) -> Result<Vec<Sample>, MementoError> {
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let uri = OriginalUri::parse(fields.next().unwrap())?;
        let class = fields.next().map(|c| c.to_string());
        out.push(Sample { uri, class });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Both policies must agree on every followed link.
    Strict,
    /// When no common link exists, each policy picks its own.
    Relaxed,
}

#[derive(Debug, Clone)]
pub struct WalkConfig {
    pub mode: Mode,
    /// Successful-step cap per walk.
    pub max_steps: u32,
    pub client: ClientConfig,
    pub extract: ExtractOptions,
    /// Count domains by the last two host labels instead of the full
    /// hostname (a registrable-domain approximation). Off by default;
    /// full lowercased hostnames are the documented domain notion.
    pub two_label_domains: bool,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            mode: Mode::Strict,
            max_steps: 50,
            client: ClientConfig::default(),
            extract: ExtractOptions::default(),
            two_label_domains: false,
        }
    }
}

/// The domain-count key for a host under the configured notion.
fn domain_key(host: &str, two_label: bool) -> &str {
    if !two_label {
        return host;
    }
    let mut dots = 0;
    for (i, b) in host.bytes().enumerate().rev() {
        if b == b'.' {
            dots += 1;
            if dots == 2 {
                return &host[i + 1..];
            }
        }
    }
    host
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Timemap,
    Memento,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StopKind {
    Http403,
    Http404,
    Http503,
    DownloadFailed,
    NotHtml,
    NoCommonLinks,
    Other,
}

/// Why a walk ended before the step cap, and at which stage of the step.
/// No-common-links can only arise at the memento stage: both mementos were
/// fetched but shared no usable link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StopCause {
    pub stage: Stage,
    pub kind: StopKind,
}

impl StopCause {
    pub fn new(stage: Stage, kind: StopKind) -> Self {
        let stage = if kind == StopKind::NoCommonLinks { Stage::Memento } else { stage };
        StopCause { stage, kind }
    }
}

fn stop_kind(kind: OutcomeKind) -> StopKind {
    match kind {
        OutcomeKind::Http403 => StopKind::Http403,
        OutcomeKind::Http404 => StopKind::Http404,
        OutcomeKind::Http503 => StopKind::Http503,
        OutcomeKind::DownloadFailed => StopKind::DownloadFailed,
        OutcomeKind::NotHtml => StopKind::NotHtml,
        OutcomeKind::Other | OutcomeKind::Success => StopKind::Other,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepOutcome {
    Success,
    Stopped(StopCause),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HopRecord {
    pub uri: String,
    pub kind: HopKind,
}

/// A dereference chain as stored in walk records (bodies dropped).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub requested: String,
    pub hops: Vec<HopRecord>,
    pub final_uri: String,
    pub final_dt: ArchiveDatetime,
}

impl From<&DereferenceChain> for ChainRecord {
    fn from(c: &DereferenceChain) -> Self {
        ChainRecord {
            requested: c.requested.uri.clone(),
            hops: c.hops.iter().map(|(uri, kind)| HopRecord { uri: uri.clone(), kind: *kind }).collect(),
            final_uri: c.final_memento.uri.clone(),
            final_dt: c.final_memento.datetime,
        }
    }
}

/// One walk step: the selected URI-R(s), both policies' dereference
/// chains, the drifts, the choice count, and the outcome.
///
/// `drift_api` is measured against the walk's fixed sticky target;
/// `drift_ui` against this step's sliding target `t_sliding`. On relaxed
/// steps `r_sliding` differs from `r_sticky`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkStep {
    pub index: u32,
    pub r_sticky: Option<OriginalUri>,
    pub r_sliding: Option<OriginalUri>,
    pub t_sliding: Option<ArchiveDatetime>,
    pub api_chain: Option<ChainRecord>,
    pub ui_chain: Option<ChainRecord>,
    pub drift_api: Option<Drift>,
    pub drift_ui: Option<Drift>,
    /// `|L^u|` for strict steps (0 on step 1); max of the per-policy pools
    /// on relaxed steps.
    pub choice: u32,
    pub relaxed: bool,
    pub domains_so_far: u32,
    pub outcome: StepOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum WalkEnd {
    Stopped(StopCause),
    /// All `max_steps` steps succeeded; there is no stop cause.
    CompletedMax,
}

/// A complete walk record. `length` counts successful steps: a walk that
/// stops on step 6 has length 5.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Walk {
    pub seed: u64,
    pub sample_class: Option<String>,
    /// The fixed sticky target, set once from the first selected memento.
    pub t_sticky: Option<ArchiveDatetime>,
    pub steps: Vec<WalkStep>,
    pub length: u32,
    pub end: WalkEnd,
    /// Hash over the ordered per-step selections and finals; used to drop
    /// duplicate walks campaign-wide.
    pub fingerprint: String,
}

impl Walk {
    pub fn successful_steps(&self) -> impl Iterator<Item = &WalkStep> {
        self.steps.iter().filter(|s| s.outcome == StepOutcome::Success)
    }

    /// Distinct hosts visited over the whole walk.
    pub fn domain_count(&self) -> u32 {
        self.steps.last().map(|s| s.domains_so_far).unwrap_or(0)
    }
}

fn fingerprint(steps: &[WalkStep]) -> String {
    let mut h = Sha256::new();
    for step in steps {
        let field = |h: &mut Sha256, v: Option<&str>| {
            h.update(v.unwrap_or("").as_bytes());
            h.update([0x1]);
        };
        field(&mut h, step.r_sticky.as_ref().map(|r| r.as_str()));
        field(&mut h, step.r_sliding.as_ref().map(|r| r.as_str()));
        field(&mut h, step.api_chain.as_ref().map(|c| c.final_uri.as_str()));
        field(&mut h, step.ui_chain.as_ref().map(|c| c.final_uri.as_str()));
        h.update([0x2]);
    }
    hex::encode(h.finalize())
}

pub struct WalkEngine<'a> {
    backend: &'a dyn Backend,
    cfg: WalkConfig,
}

/// Mutable per-walk state threaded between steps.
struct WalkState {
    client: ArchiveClient,
    rng: WalkRng,
    t1: ArchiveDatetime,
    /// Sliding target for the next step: the datetime actually displayed
    /// by the sliding side at the previous step.
    ui_target: ArchiveDatetime,
    /// L^p: URI-Rs used in previous steps (union of both policies).
    visited: LinkSet,
    hosts: BTreeSet<String>,
    api_body: Vec<u8>,
    api_uri: String,
    ui_body: Vec<u8>,
    ui_uri: String,
}

enum StepResult {
    Success(WalkStep),
    Stopped(WalkStep),
}

impl<'a> WalkEngine<'a> {
    pub fn new(backend: &'a dyn Backend, cfg: WalkConfig) -> Self {
        WalkEngine { backend, cfg }
    }

    /// Runs one seeded walk to completion. Failures are recorded in the
    /// final step, never raised.
    pub fn run_walk(&self, seed: u64, samples: &[Sample]) -> Walk {
        assert!(!samples.is_empty(), "run_walk needs a non-empty sample set");
        let mut rng = WalkRng::seed_from(seed);
        let client = ArchiveClient::new(self.backend, self.cfg.client.clone());

        let sample = &samples[rng.uniform_index(samples.len())];
        let mut steps = Vec::new();
        let mut t_sticky = None;

        let first = self.first_step(client, rng, &sample.uri);
        let (mut state, mut end) = match first {
            FirstStep::Failed(step, cause) => {
                steps.push(step);
                (None, Some(WalkEnd::Stopped(cause)))
            }
            FirstStep::Ok(step, state) => {
                t_sticky = Some(state.t1);
                steps.push(step);
                (Some(state), None)
            }
        };

        if let Some(state) = state.as_mut() {
            for index in 2..=self.cfg.max_steps {
                match self.next_step(state, index) {
                    StepResult::Success(step) => steps.push(step),
                    StepResult::Stopped(step) => {
                        let cause = match step.outcome {
                            StepOutcome::Stopped(c) => c,
                            StepOutcome::Success => unreachable!(),
                        };
                        steps.push(step);
                        end = Some(WalkEnd::Stopped(cause));
                        break;
                    }
                }
            }
        }

        let length = steps.iter().filter(|s| s.outcome == StepOutcome::Success).count() as u32;
        Walk {
            seed,
            sample_class: sample.class.clone(),
            t_sticky,
            fingerprint: fingerprint(&steps),
            steps,
            length,
            end: end.unwrap_or(WalkEnd::CompletedMax),
        }
    }

    /// Phase I: select the first URI-R and memento, set the session
    /// target, and dereference both policies.
    fn first_step(
        &self,
        mut client: ArchiveClient,
        mut rng: WalkRng,
        r1: &OriginalUri,
    ) -> FirstStep {
        let mut hosts = BTreeSet::new();
        hosts.insert(domain_key(r1.host(), self.cfg.two_label_domains).to_string());
        let mut step = WalkStep {
            index: 1,
            r_sticky: Some(r1.clone()),
            r_sliding: Some(r1.clone()),
            t_sliding: None,
            api_chain: None,
            ui_chain: None,
            drift_api: None,
            drift_ui: None,
            choice: 0,
            relaxed: false,
            domains_so_far: 1,
            outcome: StepOutcome::Success,
        };

        let tm = match client.fetch_timemap(r1) {
            Ok(tm) => tm,
            Err(outcome) => {
                let cause = StopCause::new(Stage::Timemap, stop_kind(outcome.kind));
                step.outcome = StepOutcome::Stopped(cause);
                return FirstStep::Failed(step, cause);
            }
        };
        let m1 = tm.mementos()[rng.uniform_index(tm.len())].clone();
        let t1 = m1.datetime;
        step.t_sliding = Some(t1);

        let api = match client.dereference_sticky(r1, t1, &tm) {
            Ok(chain) => chain,
            Err(outcome) => {
                return FirstStep::Failed(
                    record_memento_failure(&mut step, &outcome, true),
                    cause_of(&mut step),
                )
            }
        };
        step.api_chain = Some((&api).into());
        step.drift_api = Some(compute_drift(t1, api.final_memento.datetime));

        let built = build_wayback_uri(client.archive_base(), t1, r1);
        let ui = match client.dereference_sliding(built) {
            Ok(chain) => chain,
            Err(outcome) => {
                return FirstStep::Failed(
                    record_memento_failure(&mut step, &outcome, false),
                    cause_of(&mut step),
                )
            }
        };
        step.ui_chain = Some((&ui).into());
        step.drift_ui = Some(compute_drift(t1, ui.final_memento.datetime));

        let mut visited = LinkSet::new();
        visited.insert(r1.clone());
        let state = WalkState {
            client,
            rng,
            t1,
            ui_target: ui.final_memento.datetime,
            visited,
            hosts,
            api_uri: api.final_memento.uri.clone(),
            api_body: api.body,
            ui_uri: ui.final_memento.uri.clone(),
            ui_body: ui.body,
        };
        FirstStep::Ok(step, state)
    }

    /// Phase II: pick the next common link, then run both policies —
    /// sticky selects nearest the fixed target from a fresh timemap,
    /// sliding rebuilds a replay URI at the previous displayed datetime.
    fn next_step(&self, state: &mut WalkState, index: u32) -> StepResult {
        let la = extract_links(&state.api_body, &state.api_uri, self.cfg.extract);
        let lw = extract_links(&state.ui_body, &state.ui_uri, self.cfg.extract);
        let lu = common_usable(&la, &lw, &state.visited);

        let mut step = WalkStep {
            index,
            r_sticky: None,
            r_sliding: None,
            t_sliding: Some(state.ui_target),
            api_chain: None,
            ui_chain: None,
            drift_api: None,
            drift_ui: None,
            choice: 0,
            relaxed: false,
            domains_so_far: state.hosts.len() as u32,
            outcome: StepOutcome::Success,
        };

        let (r_api, r_ui) = if !lu.is_empty() {
            step.choice = lu.len() as u32;
            let r = lu.nth(state.rng.uniform_index(lu.len())).unwrap().clone();
            (r.clone(), r)
        } else if self.cfg.mode == Mode::Relaxed {
            match relaxed_pair(&la, &lw, &state.visited, &mut state.rng) {
                Ok((r_api, r_ui)) => {
                    step.relaxed = true;
                    step.choice =
                        la.minus(&state.visited).len().max(lw.minus(&state.visited).len()) as u32;
                    (r_api, r_ui)
                }
                Err(_) => {
                    let cause = StopCause::new(Stage::Memento, StopKind::NoCommonLinks);
                    step.outcome = StepOutcome::Stopped(cause);
                    return StepResult::Stopped(step);
                }
            }
        } else {
            let cause = StopCause::new(Stage::Memento, StopKind::NoCommonLinks);
            step.outcome = StepOutcome::Stopped(cause);
            return StepResult::Stopped(step);
        };

        step.r_sticky = Some(r_api.clone());
        step.r_sliding = Some(r_ui.clone());
        state.visited.insert(r_api.clone());
        state.visited.insert(r_ui.clone());
        let two_label = self.cfg.two_label_domains;
        state.hosts.insert(domain_key(r_api.host(), two_label).to_string());
        state.hosts.insert(domain_key(r_ui.host(), two_label).to_string());
        step.domains_so_far = state.hosts.len() as u32;

        let tm = match state.client.fetch_timemap(&r_api) {
            Ok(tm) => tm,
            Err(outcome) => {
                let cause = StopCause::new(Stage::Timemap, stop_kind(outcome.kind));
                step.outcome = StepOutcome::Stopped(cause);
                return StepResult::Stopped(step);
            }
        };

        let api = match state.client.dereference_sticky(&r_api, state.t1, &tm) {
            Ok(chain) => chain,
            Err(outcome) => {
                record_memento_failure(&mut step, &outcome, true);
                return StepResult::Stopped(step);
            }
        };
        step.api_chain = Some((&api).into());
        step.drift_api = Some(compute_drift(state.t1, api.final_memento.datetime));

        let built = build_wayback_uri(state.client.archive_base(), state.ui_target, &r_ui);
        let ui = match state.client.dereference_sliding(built) {
            Ok(chain) => chain,
            Err(outcome) => {
                record_memento_failure(&mut step, &outcome, false);
                return StepResult::Stopped(step);
            }
        };
        step.ui_chain = Some((&ui).into());
        step.drift_ui = Some(compute_drift(state.ui_target, ui.final_memento.datetime));

        state.ui_target = ui.final_memento.datetime;
        state.api_uri = api.final_memento.uri.clone();
        state.api_body = api.body;
        state.ui_uri = ui.final_memento.uri.clone();
        state.ui_body = ui.body;
        StepResult::Success(step)
    }
}

enum FirstStep {
    Ok(WalkStep, WalkState),
    Failed(WalkStep, StopCause),
}

fn cause_of(step: &mut WalkStep) -> StopCause {
    match step.outcome {
        StepOutcome::Stopped(c) => c,
        StepOutcome::Success => unreachable!("cause_of on successful step"),
    }
}

/// Marks a step failed at the memento stage, keeping whatever chain the
/// failing outcome reached (e.g. a NotHtml final memento).
fn record_memento_failure(step: &mut WalkStep, outcome: &FetchOutcome, api_side: bool) -> WalkStep {
    if let Some(m) = &outcome.final_memento {
        let chain = ChainRecord {
            requested: m.uri.clone(),
            hops: Vec::new(),
            final_uri: m.uri.clone(),
            final_dt: m.datetime,
        };
        if api_side {
            step.api_chain = Some(chain);
        } else {
            step.ui_chain = Some(chain);
        }
    }
    let cause = StopCause::new(Stage::Memento, stop_kind(outcome.kind));
    step.outcome = StepOutcome::Stopped(cause);
    step.clone()
}

/// Runs one walk per seed, optionally in parallel. Output order follows
/// the seed order regardless of parallelism.
pub fn run_campaign(
    backend: &dyn Backend,
    cfg: &WalkConfig,
    samples: &[Sample],
    seeds: &[u64],
    parallelism: usize,
) -> Vec<Walk> {
    let engine = WalkEngine::new(backend, cfg.clone());
    if parallelism <= 1 {
        seeds.iter().map(|&s| engine.run_walk(s, samples)).collect()
    } else {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism)
            .build()
            .expect("rayon pool");
        pool.install(|| seeds.par_iter().map(|&s| engine.run_walk(s, samples)).collect())
    }
}

/// Drops duplicate walks by fingerprint, keeping first occurrences.
pub fn dedup_walks(walks: Vec<Walk>) -> Vec<Walk> {
    let mut seen = HashSet::new();
    walks.into_iter().filter(|w| seen.insert(w.fingerprint.clone())).collect()
}

/// Derives per-walk seeds from a campaign master seed.
pub fn derive_seeds(master: u64, n: usize) -> Vec<u64> {
    let mut rng = WalkRng::seed_from(master);
    let mut seen = HashSet::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let s = rng.next_u64();
        if seen.insert(s) {
            out.push(s);
        }
    }
    out
}

// --- fixed-click replay ----------------------------------------------------

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("replay fetch failed at {uri}: {kind:?}")]
    Fetch { uri: String, kind: OutcomeKind },
}

/// One displayed page per policy, with drift relative to the session's
/// original target.
#[derive(Debug, Clone)]
pub struct ReplayRow {
    pub uri: OriginalUri,
    pub ui_dt: ArchiveDatetime,
    pub ui_drift: Option<Drift>,
    pub api_dt: ArchiveDatetime,
    pub api_drift: Option<Drift>,
}

#[derive(Debug, Clone)]
pub struct ReplayTable {
    pub target: ArchiveDatetime,
    pub rows: Vec<ReplayRow>,
    pub ui_mean: Drift,
    pub api_mean: Drift,
}

impl<'a> WalkEngine<'a> {
    /// Replays a fixed click sequence through both policies, starting at
    /// `start` with session target `t1`. Unlike walks, clicks may revisit
    /// pages.
    ///
    /// Drift here is presented the way a user perceives it — distance of
    /// each displayed page from the originally selected datetime — for
    /// both policies. (Walk records instead measure each sliding step
    /// against its own, moved target.) The first row has no drift entry
    /// and is excluded from the means.
    pub fn replay_clicks(
        &self,
        start: &OriginalUri,
        t1: ArchiveDatetime,
        clicks: &[OriginalUri],
    ) -> Result<ReplayTable, ReplayError> {
        let mut client = ArchiveClient::new(self.backend, self.cfg.client.clone());
        let base = client.archive_base().to_string();
        let fetch_err = |uri: &OriginalUri, o: FetchOutcome| ReplayError::Fetch {
            uri: uri.as_str().to_string(),
            kind: o.kind,
        };

        let mut rows = Vec::new();
        let mut ui_target = t1;
        for (i, r) in std::iter::once(start).chain(clicks.iter()).enumerate() {
            let tm = client.fetch_timemap(r).map_err(|o| fetch_err(r, o))?;
            let api = client
                .dereference_sticky(r, t1, &tm)
                .map_err(|o| fetch_err(r, o))?;
            let built = build_wayback_uri(&base, ui_target, r);
            let ui = client.dereference_sliding(built).map_err(|o| fetch_err(r, o))?;
            let first = i == 0;
            rows.push(ReplayRow {
                uri: r.clone(),
                ui_dt: ui.final_memento.datetime,
                ui_drift: (!first).then(|| compute_drift(t1, ui.final_memento.datetime)),
                api_dt: api.final_memento.datetime,
                api_drift: (!first).then(|| compute_drift(t1, api.final_memento.datetime)),
            });
            ui_target = ui.final_memento.datetime;
        }

        let mean = |drifts: Vec<u64>| {
            if drifts.is_empty() {
                Drift::ZERO
            } else {
                Drift::from_secs(drifts.iter().sum::<u64>() / drifts.len() as u64)
            }
        };
        let ui_mean = mean(rows.iter().filter_map(|r| r.ui_drift).map(|d| d.as_secs()).collect());
        let api_mean =
            mean(rows.iter().filter_map(|r| r.api_drift).map(|d| d.as_secs()).collect());
        Ok(ReplayTable { target: t1, rows, ui_mean, api_mean })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{self, ExplicitFault, ExplicitPage, Fault, FaultScope, SimBackend, SimConfig};
    use std::sync::Arc;
    use std::time::Duration;

    fn quick_cfg() -> WalkConfig {
        WalkConfig {
            client: ClientConfig { retry_delay: Duration::ZERO, ..Default::default() },
            ..Default::default()
        }
    }

    fn backend_for(cfg: &SimConfig) -> SimBackend {
        SimBackend::new(Arc::new(sim::generate(cfg).unwrap()))
    }

    fn samples_of(backend: &SimBackend) -> Vec<Sample> {
        backend
            .archive()
            .samples()
            .iter()
            .map(|(uri, class)| Sample {
                uri: OriginalUri::parse(uri).unwrap(),
                class: Some(class.clone()),
            })
            .collect()
    }

    #[test]
    fn unarchived_first_pick_stops_with_timemap_404_and_length_0() {
        let mut cfg = SimConfig::bare(1);
        cfg.explicit_pages = vec![ExplicitPage::new("http://never.test/", &[], &[])];
        let backend = backend_for(&cfg);
        let samples = vec![Sample { uri: OriginalUri::parse("http://never.test/").unwrap(), class: None }];
        let walk = WalkEngine::new(&backend, quick_cfg()).run_walk(9, &samples);
        assert_eq!(walk.length, 0);
        assert_eq!(walk.steps.len(), 1);
        assert_eq!(
            walk.end,
            WalkEnd::Stopped(StopCause::new(Stage::Timemap, StopKind::Http404))
        );
        assert!(walk.t_sticky.is_none());
    }

    #[test]
    fn no_redirect_sim_gives_zero_drift_on_step_1() {
        let cfg = sim::table1_fixture();
        let backend = backend_for(&cfg);
        let samples = samples_of(&backend);
        for seed in 0..8 {
            let walk = WalkEngine::new(&backend, quick_cfg()).run_walk(seed, &samples);
            let s1 = &walk.steps[0];
            if s1.outcome == StepOutcome::Success {
                assert_eq!(s1.drift_api.unwrap(), Drift::ZERO);
                assert_eq!(s1.drift_ui.unwrap(), Drift::ZERO);
            }
        }
    }

    #[test]
    fn first_memento_redirect_gives_step_1_drift() {
        let mut cfg = SimConfig::bare(2);
        cfg.explicit_pages = vec![ExplicitPage::new(
            "http://r.test/",
            &["20050101000000", "20060101000000"],
            &[],
        )];
        // Every fetch of the 2005 snapshot lands on the 2006 one.
        let to_ts = ArchiveDatetime::decode14("20060101000000").unwrap().timestamp();
        cfg.explicit_faults = vec![ExplicitFault {
            scope: FaultScope::Memento { uri: "http://r.test/".into(), datetime: "20050101000000".into() },
            fault: Fault::HardRedirect { to_uri: "http://r.test/".into(), to_ts },
        }];
        let backend = backend_for(&cfg);
        let samples = vec![Sample { uri: OriginalUri::parse("http://r.test/").unwrap(), class: None }];
        // Find a seed that picks the 2005 snapshot as M1.
        let engine = WalkEngine::new(&backend, quick_cfg());
        let walk = (0..32)
            .map(|s| engine.run_walk(s, &samples))
            .find(|w| w.t_sticky.map(|t| t.encode14()) == Some("20050101000000".into()))
            .expect("some seed selects the 2005 snapshot");
        let s1 = &walk.steps[0];
        assert!(s1.drift_api.unwrap() > Drift::ZERO, "redirect drifts even on step 1");
        assert_eq!(s1.drift_api.unwrap().as_secs(), 365 * 86_400);
    }

    #[test]
    fn walk_is_deterministic_for_a_seed() {
        let cfg = sim::default_campaign(3);
        let backend = backend_for(&cfg);
        let samples = samples_of(&backend);
        let engine = WalkEngine::new(&backend, quick_cfg());
        let a = engine.run_walk(1234, &samples);
        let b = engine.run_walk(1234, &samples);
        assert_eq!(a, b);
        assert_eq!(a.fingerprint, b.fingerprint);
    }

    #[test]
    fn sticky_target_fixed_and_sliding_recurrence_holds() {
        let cfg = sim::default_campaign(3);
        let backend = backend_for(&cfg);
        let samples = samples_of(&backend);
        let engine = WalkEngine::new(&backend, quick_cfg());
        let mut checked_recurrence = false;
        for seed in 0..40u64 {
            let walk = engine.run_walk(seed, &samples);
            let succ: Vec<&WalkStep> = walk.successful_steps().collect();
            if let Some(t1) = walk.t_sticky {
                // Sticky drift is always measured against t1, assertable
                // by recomputation from the chains.
                for s in &succ {
                    let api_dt = s.api_chain.as_ref().unwrap().final_dt;
                    assert_eq!(
                        s.drift_api.unwrap(),
                        compute_drift(t1, api_dt),
                        "seed {seed} step {}",
                        s.index
                    );
                }
                // Sliding: t_i = datetime displayed at step i-1.
                for w in succ.windows(2) {
                    let prev_final = w[0].ui_chain.as_ref().unwrap().final_dt;
                    assert_eq!(w[1].t_sliding, Some(prev_final));
                    checked_recurrence = true;
                }
                assert_eq!(succ.first().and_then(|s| s.t_sliding), Some(t1));
            }
        }
        assert!(checked_recurrence, "no multi-step walk exercised the recurrence");
    }

    #[test]
    fn acyclic_within_a_walk() {
        let cfg = sim::default_campaign(3);
        let backend = backend_for(&cfg);
        let samples = samples_of(&backend);
        let engine = WalkEngine::new(&backend, quick_cfg());
        for seed in 0..40u64 {
            let walk = engine.run_walk(seed, &samples);
            let rs: Vec<&str> =
                walk.steps.iter().filter_map(|s| s.r_sticky.as_ref()).map(|r| r.as_str()).collect();
            let mut dedup = rs.clone();
            dedup.sort_unstable();
            dedup.dedup();
            assert_eq!(dedup.len(), rs.len(), "revisit in seed {seed}: {rs:?}");
        }
    }

    #[test]
    fn sticky_final_is_nearest_to_t1_when_redirects_disabled() {
        let mut cfg = sim::default_campaign(13);
        cfg.faults = sim::FaultRates::none();
        let backend = backend_for(&cfg);
        let samples = samples_of(&backend);
        let engine = WalkEngine::new(&backend, quick_cfg());
        let mut checked = 0;
        for seed in 0..30u64 {
            let walk = engine.run_walk(seed, &samples);
            let Some(t1) = walk.t_sticky else { continue };
            for s in walk.successful_steps() {
                let r = s.r_sticky.as_ref().unwrap();
                let schedule = backend.archive().page_schedule(r.as_str()).unwrap();
                let nearest = schedule
                    .iter()
                    .map(|&ts| ((ts - t1.timestamp()).abs(), ts))
                    .min()
                    .unwrap()
                    .1;
                assert_eq!(s.api_chain.as_ref().unwrap().final_dt.timestamp(), nearest);
                checked += 1;
            }
        }
        assert!(checked > 50);
    }

    #[test]
    fn campaign_dedup_collapses_identical_selections() {
        // One sample, one snapshot: every seed walks the same path.
        let mut cfg = SimConfig::bare(4);
        cfg.explicit_pages =
            vec![ExplicitPage::new("http://only.test/", &["20050101000000"], &[])];
        let backend = backend_for(&cfg);
        let samples = vec![Sample { uri: OriginalUri::parse("http://only.test/").unwrap(), class: None }];
        let walks = run_campaign(&backend, &quick_cfg(), &samples, &[1, 2, 3], 1);
        assert_eq!(walks.len(), 3);
        let unique = dedup_walks(walks);
        assert_eq!(unique.len(), 1);
    }

    #[test]
    fn zero_walk_campaign_is_empty() {
        let cfg = sim::table1_fixture();
        let backend = backend_for(&cfg);
        let samples = samples_of(&backend);
        assert!(run_campaign(&backend, &quick_cfg(), &samples, &[], 1).is_empty());
    }

    #[test]
    fn parallel_campaign_matches_sequential() {
        let cfg = sim::default_campaign(3);
        let backend = backend_for(&cfg);
        let samples = samples_of(&backend);
        let seeds: Vec<u64> = (0..24).collect();
        let seq = run_campaign(&backend, &quick_cfg(), &samples, &seeds, 1);
        let par = run_campaign(&backend, &quick_cfg(), &samples, &seeds, 4);
        assert_eq!(seq, par);
    }

    fn chain_pages(n: usize) -> Vec<ExplicitPage> {
        (0..n)
            .map(|i| ExplicitPage {
                uri: format!("http://chain.test/p{i}"),
                snapshots: vec!["20050101000000".into()],
                links: if i + 1 < n {
                    vec![format!("http://chain.test/p{}", i + 1)]
                } else {
                    vec![]
                },
                snapshot_links: Vec::new(),
            })
            .collect()
    }

    #[test]
    fn max_steps_cap_yields_completed_max_without_stop_cause() {
        // A two-page loop would revisit, so acyclicity ends it; instead
        // use a chain of pages, each linking to the next.
        let mut cfg = SimConfig::bare(5);
        cfg.explicit_pages = chain_pages(6);
        let backend = backend_for(&cfg);
        let samples =
            vec![Sample { uri: OriginalUri::parse("http://chain.test/p0").unwrap(), class: None }];
        let mut cfg = quick_cfg();
        cfg.max_steps = 3;
        let walk = WalkEngine::new(&backend, cfg).run_walk(1, &samples);
        assert_eq!(walk.length, 3);
        assert_eq!(walk.end, WalkEnd::CompletedMax);
        assert_eq!(walk.steps.len(), 3);
    }

    #[test]
    fn stop_on_step_6_means_length_5() {
        let mut cfg = SimConfig::bare(5);
        // p0 -> p1 -> ... -> p4; p4 links to nothing, so step 6 finds no
        // common links after five successful steps.
        cfg.explicit_pages = chain_pages(5);
        let backend = backend_for(&cfg);
        let samples =
            vec![Sample { uri: OriginalUri::parse("http://chain.test/p0").unwrap(), class: None }];
        let walk = WalkEngine::new(&backend, quick_cfg()).run_walk(1, &samples);
        assert_eq!(walk.steps.last().unwrap().index, 6);
        assert_eq!(walk.length, 5);
        assert_eq!(
            walk.end,
            WalkEnd::Stopped(StopCause::new(Stage::Memento, StopKind::NoCommonLinks))
        );
    }

    /// Start page redirects both policies from the 2005 to the 2007
    /// snapshot. The sticky target stays 2005 while the sliding target
    /// moves to 2007, so at the next page the two policies view different
    /// snapshots with disjoint link sets.
    fn diverging_cfg() -> SimConfig {
        let mut cfg = SimConfig::bare(6);
        cfg.explicit_pages = vec![
            ExplicitPage::new(
                "http://fork.test/",
                &["20050101000000", "20070101000000"],
                &["http://fork.test/a"],
            ),
            ExplicitPage {
                uri: "http://fork.test/a".into(),
                snapshots: vec!["20050101000000".into(), "20070101000000".into()],
                links: vec![],
                snapshot_links: vec![
                    vec!["http://fork.test/c".into()],
                    vec!["http://fork.test/d".into()],
                ],
            },
            ExplicitPage::new("http://fork.test/c", &["20050101000000"], &[]),
            ExplicitPage::new("http://fork.test/d", &["20070101000000"], &[]),
        ];
        let to_ts = ArchiveDatetime::decode14("20070101000000").unwrap().timestamp();
        cfg.explicit_faults = vec![ExplicitFault {
            scope: FaultScope::Memento {
                uri: "http://fork.test/".into(),
                datetime: "20050101000000".into(),
            },
            fault: Fault::HardRedirect { to_uri: "http://fork.test/".into(), to_ts },
        }];
        cfg
    }

    #[test]
    fn relaxed_mode_continues_where_strict_stops() {
        let cfg = diverging_cfg();
        let backend = backend_for(&cfg);
        let samples =
            vec![Sample { uri: OriginalUri::parse("http://fork.test/").unwrap(), class: None }];

        let engine = WalkEngine::new(&backend, quick_cfg());
        // Find a seed whose first memento pick is the 2005 snapshot.
        let seed = (0..32)
            .find(|&s| {
                let w = engine.run_walk(s, &samples);
                w.t_sticky.map(|t| t.encode14()) == Some("20050101000000".into())
            })
            .expect("some seed selects the 2005 snapshot");

        let strict = engine.run_walk(seed, &samples);
        assert_eq!(strict.length, 2);
        assert_eq!(
            strict.end,
            WalkEnd::Stopped(StopCause::new(Stage::Memento, StopKind::NoCommonLinks))
        );

        let mut relaxed_cfg = quick_cfg();
        relaxed_cfg.mode = Mode::Relaxed;
        let relaxed = WalkEngine::new(&backend, relaxed_cfg).run_walk(seed, &samples);
        assert!(relaxed.length > strict.length);
        let step3 = &relaxed.steps[2];
        assert!(step3.relaxed);
        assert_ne!(step3.r_sticky, step3.r_sliding);
        assert_eq!(step3.r_sticky.as_ref().unwrap().as_str(), "http://fork.test/c");
        assert_eq!(step3.r_sliding.as_ref().unwrap().as_str(), "http://fork.test/d");
    }

    #[test]
    fn domain_key_two_label_suffix() {
        assert_eq!(domain_key("www.example.com", false), "www.example.com");
        assert_eq!(domain_key("www.example.com", true), "example.com");
        assert_eq!(domain_key("a.b.example.co", true), "example.co");
        assert_eq!(domain_key("example.com", true), "example.com");
        assert_eq!(domain_key("localhost", true), "localhost");
    }

    #[test]
    fn derive_seeds_is_stable_and_distinct() {
        let a = derive_seeds(99, 100);
        let b = derive_seeds(99, 100);
        assert_eq!(a, b);
        let mut c = a.clone();
        c.sort_unstable();
        c.dedup();
        assert_eq!(c.len(), 100);
    }
}
