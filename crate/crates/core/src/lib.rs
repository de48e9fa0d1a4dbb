//! Measures temporal drift when browsing a web archive under two
//! target-datetime policies.
//!
//! Browsing an archive means asking for pages at a target datetime and
//! getting back whatever snapshot the archive actually holds. Under the
//! **sliding** policy the served snapshot's datetime becomes the next
//! request's target (how archive replay UIs behave); under the **sticky**
//! policy the target stays fixed for the whole session (how datetime
//! negotiation clients behave). This crate runs seeded acyclic link walks
//! under both policies in lockstep — against a real Memento-speaking
//! archive or a built-in deterministic simulated one — and aggregates the
//! drift each policy accumulates.
//!
//! Module map:
//! - [`memento`]: datetimes, URI-Rs/URI-Ms, timemaps, drift, and the pure
//!   functions over them.
//! - [`timemap_link`]: the link-format timemap wire codec.
//! - [`client`]: backend-agnostic archive access — timemap fetching,
//!   dereference chains with hard/soft redirects, outcome classification,
//!   503 retry.
//! - [`live`]: HTTP backend for a real archive, with per-host politeness.
//! - [`extract`]: anchor extraction and the common-usable link set.
//! - [`rng`]: the pinned walk random number generator.
//! - [`walk`]: the three-phase walk engine and campaign runner.
//! - [`sim`]: the deterministic simulated archive and its drift oracle.
//! - [`stats`]: drift series, length/stop-cause tables, campaign summary.
//! - [`report`]: walk-record files and the report bundle.

pub mod client;
pub mod extract;
pub mod live;
pub mod memento;
pub mod report;
pub mod rng;
pub mod sim;
pub mod stats;
pub mod timemap_link;
pub mod walk;

pub use memento::{
    best_memento, build_wayback_uri, compute_drift, parse_wayback_uri, ArchiveDatetime, Drift,
    MementoError, MementoUri, OriginalUri, TimeMap,
};
