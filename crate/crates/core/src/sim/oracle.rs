//! Independent drift oracle over the simulated archive.
//!
//! Given a walk record, recomputes — by direct scans of the corpus index
//! and fault tables, sharing none of the timemap/client/selection code the
//! engine runs — the drift each policy must have reported at every
//! successful step. Acceptance tests assert exact equality.

use thiserror::Error;

use super::{soft_build_roll, Fault, SimArchive};
use crate::walk::{StepOutcome, Walk};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("walk has no first target datetime")]
    NoTarget,
    #[error("unknown URI in transcript: {0}")]
    UnknownUri(String),
    #[error("step {step}: transcript says success but the archive would have failed ({why})")]
    ImpossibleSuccess { step: u32, why: String },
    #[error("step {step}: redirect chain does not terminate")]
    ChainDiverges { step: u32 },
}

/// Expected `(sticky, sliding)` drift in seconds for each successful step
/// of the walk, in order.
pub fn oracle_drift(archive: &SimArchive, walk: &Walk) -> Result<Vec<(u64, u64)>, OracleError> {
    let Some(t1) = walk.t_sticky else {
        // No target was ever selected: the walk died fetching its first
        // timemap and has no successful steps to account for.
        return if walk.steps.iter().any(|s| s.outcome == StepOutcome::Success) {
            Err(OracleError::NoTarget)
        } else {
            Ok(Vec::new())
        };
    };
    let t1 = t1.timestamp();
    let mut ui_target = t1;
    let mut out = Vec::new();

    for step in &walk.steps {
        if step.outcome != StepOutcome::Success {
            break;
        }
        let r_api = step.r_sticky.as_ref().expect("successful step has r").as_str();
        let r_ui = step.r_sliding.as_ref().expect("successful step has r").as_str();

        // Sticky side: nearest snapshot to the fixed target (ties to the
        // earlier), then whatever redirects the archive injects, hard
        // redirects only.
        let schedule = archive
            .page_schedule(r_api)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| OracleError::UnknownUri(r_api.to_string()))?;
        let selected = schedule[scan_nearest(schedule, t1)];
        let (_, api_final) = settle(archive, r_api, selected, false, step.index)?;
        let drift_api = (t1 - api_final).unsigned_abs();

        // Sliding side: a replay URI built at the previous displayed
        // datetime, soft redirects followed.
        let (_, ui_final) = settle(archive, r_ui, ui_target, true, step.index)?;
        let drift_ui = (ui_target - ui_final).unsigned_abs();
        ui_target = ui_final;

        out.push((drift_api, drift_ui));
    }
    Ok(out)
}

/// Exhaustive linear scan for the schedule entry nearest `target`,
/// preferring the earlier entry on ties.
fn scan_nearest(schedule: &[i64], target: i64) -> usize {
    let mut best = 0;
    for (i, &ts) in schedule.iter().enumerate() {
        if (ts - target).abs() < (schedule[best] - target).abs() {
            best = i;
        }
    }
    best
}

/// Replays the archive's serving rules for a request of `r` at `ts` until
/// a page is actually displayed, returning the final `(uri, datetime)`.
fn settle(
    archive: &SimArchive,
    r: &str,
    ts: i64,
    follow_soft: bool,
    step: u32,
) -> Result<(String, i64), OracleError> {
    let mut r = r.to_string();
    let mut ts = ts;
    for _ in 0..12 {
        let schedule = archive
            .page_schedule(&r)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| OracleError::UnknownUri(r.clone()))?;
        if schedule.binary_search(&ts).is_err() {
            // Between snapshots: the archive redirects to nearest, or
            // serves its seed-derived skewed script redirect, which only
            // a soft-following client moves past.
            let nearest = scan_nearest(schedule, ts);
            let skew = soft_build_roll(
                archive.config().seed,
                &archive.config().faults,
                &r,
                ts,
                schedule,
                nearest,
            );
            match skew {
                Some(_) if !follow_soft => return Ok((r, ts)),
                Some(idx) => {
                    ts = schedule[idx];
                    continue;
                }
                None => {
                    ts = schedule[nearest];
                    continue;
                }
            }
        }
        match archive.memento_fault(&r, ts) {
            None | Some(Fault::Http503 { recover: true }) => return Ok((r, ts)),
            Some(Fault::HardRedirect { to_uri, to_ts }) => {
                r = to_uri.clone();
                ts = *to_ts;
            }
            Some(Fault::SoftRedirect { to_uri, to_ts }) => {
                if !follow_soft {
                    return Ok((r, ts));
                }
                r = to_uri.clone();
                ts = *to_ts;
            }
            Some(other) => {
                return Err(OracleError::ImpossibleSuccess {
                    step,
                    why: format!("{other:?} at {r} {ts}"),
                })
            }
        }
    }
    Err(OracleError::ChainDiverges { step })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memento::OriginalUri;
    use crate::sim::{self, ExplicitPage, SimBackend, SimConfig};
    use crate::walk::{Sample, WalkConfig, WalkEngine};
    use crate::client::ClientConfig;
    use std::sync::Arc;
    use std::time::Duration;

    fn quick_cfg() -> WalkConfig {
        WalkConfig {
            client: ClientConfig { retry_delay: Duration::ZERO, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn oracle_matches_engine_on_fixture_walks() {
        let cfg = sim::table1_fixture();
        let archive = Arc::new(sim::generate(&cfg).unwrap());
        let backend = SimBackend::new(Arc::clone(&archive));
        let samples: Vec<Sample> = archive
            .samples()
            .iter()
            .map(|(u, c)| Sample { uri: OriginalUri::parse(u).unwrap(), class: Some(c.clone()) })
            .collect();
        let engine = WalkEngine::new(&backend, quick_cfg());
        for seed in 0..10 {
            let walk = engine.run_walk(seed, &samples);
            let expected = oracle_drift(&archive, &walk).unwrap();
            let got: Vec<(u64, u64)> = walk
                .successful_steps()
                .map(|s| (s.drift_api.unwrap().as_secs(), s.drift_ui.unwrap().as_secs()))
                .collect();
            assert_eq!(got, expected, "seed {seed}");
        }
    }

    #[test]
    fn single_snapshot_pages_make_policies_coincide_at_step_1() {
        let mut cfg = SimConfig::bare(8);
        cfg.explicit_pages = vec![ExplicitPage::new(
            "http://solo.test/",
            &["20050601120000"],
            &[],
        )];
        let archive = Arc::new(sim::generate(&cfg).unwrap());
        let backend = SimBackend::new(Arc::clone(&archive));
        let samples =
            vec![Sample { uri: OriginalUri::parse("http://solo.test/").unwrap(), class: None }];
        let walk = WalkEngine::new(&backend, quick_cfg()).run_walk(3, &samples);
        let drifts = oracle_drift(&archive, &walk).unwrap();
        assert_eq!(drifts, vec![(0, 0)]);
    }

    #[test]
    fn uniform_interval_without_redirects_bounds_sticky_drift() {
        // A page with exactly even spacing: sticky drift can never exceed
        // half the gap while the target lies inside the coverage span.
        let snaps: Vec<String> = (0..6)
            .map(|i| format!("200{}0101000000", 3 + i))
            .collect();
        let snap_refs: Vec<&str> = snaps.iter().map(|s| s.as_str()).collect();
        let mut cfg = SimConfig::bare(8);
        cfg.explicit_pages = vec![
            ExplicitPage::new("http://grid.test/", &snap_refs, &["http://grid.test/p1"]),
            ExplicitPage::new("http://grid.test/p1", &snap_refs, &[]),
        ];
        let archive = Arc::new(sim::generate(&cfg).unwrap());
        let backend = SimBackend::new(Arc::clone(&archive));
        let samples =
            vec![Sample { uri: OriginalUri::parse("http://grid.test/").unwrap(), class: None }];
        let engine = WalkEngine::new(&backend, quick_cfg());
        let max_gap = archive.max_snapshot_gap_secs();
        for seed in 0..8 {
            let walk = engine.run_walk(seed, &samples);
            for (api, _ui) in oracle_drift(&archive, &walk).unwrap() {
                assert!(api <= max_gap / 2, "sticky drift {api} above half-gap {max_gap}");
            }
        }
    }
}
