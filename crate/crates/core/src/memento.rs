//! Archive datetimes, URI-Rs, URI-Ms, timemaps, and drift.
//!
//! These are the value types everything else is built on: a second-precision
//! UTC archive datetime with its fixed 14-digit encoding, original and
//! memento URIs, the timemap holding a resource's snapshots, and the
//! non-negative drift between a target datetime and the memento actually
//! served.

use std::fmt;

use chrono::{DateTime, Datelike, TimeZone, Timelike, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;
use url::Url;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MementoError {
    #[error("timemap has no mementos")]
    EmptyTimeMap,
    #[error("malformed archive datetime: {0}")]
    MalformedDatetime(String),
    #[error("not an archive URI: {0}")]
    NotArchiveUri(String),
    #[error("malformed URI: {0}")]
    MalformedUri(String),
    #[error("timemap mixes original URIs: {0} vs {1}")]
    MixedOriginals(String, String),
}

/// A UTC instant at second precision, as archives record capture times.
///
/// Round-trips exactly through the 14-digit `YYYYMMDDHHMMSS` encoding used
/// in archive replay URIs, which bounds the representable years to
/// 1000..=9999.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ArchiveDatetime(DateTime<Utc>);

impl ArchiveDatetime {
    /// Builds from calendar parts. Rejects invalid calendar values and
    /// years outside the 14-digit range.
    pub fn from_parts(
        year: i32,
        month: u32,
        day: u32,
        hour: u32,
        minute: u32,
        second: u32,
    ) -> Result<Self, MementoError> {
        if !(1000..=9999).contains(&year) {
            return Err(MementoError::MalformedDatetime(format!(
                "year {year} outside 1000..=9999"
            )));
        }
        match Utc.with_ymd_and_hms(year, month, day, hour, minute, second) {
            chrono::LocalResult::Single(dt) => Ok(Self(dt)),
            _ => Err(MementoError::MalformedDatetime(format!(
                "{year:04}-{month:02}-{day:02} {hour:02}:{minute:02}:{second:02}"
            ))),
        }
    }

    /// Builds from a unix timestamp in seconds, if it lands in the
    /// representable year range.
    pub fn from_timestamp(secs: i64) -> Option<Self> {
        let dt = Utc.timestamp_opt(secs, 0).single()?;
        if (1000..=9999).contains(&dt.year()) {
            Some(Self(dt))
        } else {
            None
        }
    }

    pub fn timestamp(&self) -> i64 {
        self.0.timestamp()
    }

    /// Encodes as the fixed-width 14-digit `YYYYMMDDHHMMSS` form.
    pub fn encode14(&self) -> String {
        format!(
            "{:04}{:02}{:02}{:02}{:02}{:02}",
            self.0.year(),
            self.0.month(),
            self.0.day(),
            self.0.hour(),
            self.0.minute(),
            self.0.second()
        )
    }

    /// Decodes a 14-digit datetime string. Inverse of [`encode14`].
    ///
    /// [`encode14`]: ArchiveDatetime::encode14
    pub fn decode14(s: &str) -> Result<Self, MementoError> {
        if s.len() != 14 || !s.bytes().all(|b| b.is_ascii_digit()) {
            return Err(MementoError::MalformedDatetime(s.to_string()));
        }
        let num = |range: std::ops::Range<usize>| s[range].parse::<u32>().unwrap();
        Self::from_parts(
            s[0..4].parse::<i32>().unwrap(),
            num(4..6),
            num(6..8),
            num(8..10),
            num(10..12),
            num(12..14),
        )
    }
}

impl fmt::Display for ArchiveDatetime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.format("%Y-%m-%dT%H:%M:%SZ"))
    }
}

impl Serialize for ArchiveDatetime {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.encode14())
    }
}

impl<'de> Deserialize<'de> for ArchiveDatetime {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Self::decode14(&s).map_err(serde::de::Error::custom)
    }
}

/// A normalized absolute URI on the live web (a URI-R).
///
/// Normalization: lowercased scheme and host, default port removed,
/// fragment removed, percent-encoding left as-is, trailing slash preserved.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OriginalUri(String);

impl OriginalUri {
    pub fn parse(s: &str) -> Result<Self, MementoError> {
        let mut url = Url::parse(s.trim()).map_err(|e| {
            MementoError::MalformedUri(format!("{s}: {e}"))
        })?;
        if url.host_str().is_none() {
            return Err(MementoError::MalformedUri(format!("{s}: no host")));
        }
        url.set_fragment(None);
        Ok(Self(url.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Lowercased host component, used for domain counting.
    pub fn host(&self) -> &str {
        // Normalized form always has scheme://host.
        let rest = &self.0[self.0.find("://").map(|i| i + 3).unwrap_or(0)..];
        let end = rest
            .find(|c| c == '/' || c == ':' || c == '?')
            .unwrap_or(rest.len());
        &rest[..end]
    }
}

impl fmt::Display for OriginalUri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// The URI of one archived snapshot together with its capture datetime and
/// the URI-R it captures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MementoUri {
    pub uri: String,
    pub datetime: ArchiveDatetime,
    pub original: OriginalUri,
}

/// An original URI plus its time-ordered snapshots.
///
/// Mementos are kept sorted ascending by `(datetime, uri)`; duplicate
/// datetimes are allowed and ordered by URI-M string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeMap {
    original: OriginalUri,
    mementos: Vec<MementoUri>,
}

impl TimeMap {
    pub fn new(original: OriginalUri, mut mementos: Vec<MementoUri>) -> Result<Self, MementoError> {
        for m in &mementos {
            if m.original != original {
                return Err(MementoError::MixedOriginals(
                    original.as_str().to_string(),
                    m.original.as_str().to_string(),
                ));
            }
        }
        mementos.sort_by(|a, b| (a.datetime, &a.uri).cmp(&(b.datetime, &b.uri)));
        Ok(Self { original, mementos })
    }

    pub fn original(&self) -> &OriginalUri {
        &self.original
    }

    pub fn mementos(&self) -> &[MementoUri] {
        &self.mementos
    }

    pub fn is_empty(&self) -> bool {
        self.mementos.is_empty()
    }

    pub fn len(&self) -> usize {
        self.mementos.len()
    }
}

/// A non-negative amount of temporal drift, at second precision.
/// Direction is deliberately discarded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Drift(u64);

impl Drift {
    pub const ZERO: Drift = Drift(0);

    pub fn from_secs(secs: u64) -> Self {
        Self(secs)
    }

    pub fn as_secs(&self) -> u64 {
        self.0
    }

    pub fn as_days(&self) -> f64 {
        self.0 as f64 / 86_400.0
    }

    /// Whole days, rounded down, matching how archive drift tables are
    /// conventionally presented.
    pub fn floor_days(&self) -> u64 {
        self.0 / 86_400
    }
}

impl fmt::Display for Drift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}s", self.0)
    }
}

/// `|target - memento_dt|` in seconds. Symmetric in its arguments.
pub fn compute_drift(target: ArchiveDatetime, memento_dt: ArchiveDatetime) -> Drift {
    Drift((target.timestamp() - memento_dt.timestamp()).unsigned_abs())
}

/// The memento minimizing `|target - datetime|`. Ties go to the
/// earlier-datetime memento (and by URI-M string among equal datetimes).
pub fn best_memento<'a>(
    tm: &'a TimeMap,
    target: ArchiveDatetime,
) -> Result<&'a MementoUri, MementoError> {
    let mut best: Option<(&MementoUri, u64)> = None;
    for m in tm.mementos() {
        let d = compute_drift(target, m.datetime).as_secs();
        // Strict < keeps the first of equals; mementos are sorted ascending.
        if best.map_or(true, |(_, bd)| d < bd) {
            best = Some((m, d));
        }
    }
    best.map(|(m, _)| m).ok_or(MementoError::EmptyTimeMap)
}

/// Builds `<base>/web/<YYYYMMDDHHMMSS>/<uri-r>` with the datetime and
/// original fields populated. `archive_base` must carry no trailing slash.
pub fn build_wayback_uri(
    archive_base: &str,
    dt: ArchiveDatetime,
    r: &OriginalUri,
) -> MementoUri {
    let base = archive_base.trim_end_matches('/');
    MementoUri {
        uri: format!("{base}/web/{}/{}", dt.encode14(), r.as_str()),
        datetime: dt,
        original: r.clone(),
    }
}

/// Extracts the embedded datetime and URI-R from an archive replay URI.
///
/// Accepts replay-mode flag suffixes on the datetime segment (`im_`, `js_`,
/// `id_`, ...) and discards them. Anything that does not match the
/// `.../web/<14 digits>[flags_]/<absolute uri>` pattern is `NotArchiveUri`
/// and should be treated by callers as a live-web URI.
pub fn parse_wayback_uri(m: &str) -> Result<(ArchiveDatetime, OriginalUri), MementoError> {
    let not_archive = || MementoError::NotArchiveUri(m.to_string());
    let web = m.find("/web/").ok_or_else(not_archive)?;
    let rest = &m[web + 5..];
    let digits = rest.bytes().take_while(|b| b.is_ascii_digit()).count();
    if digits != 14 {
        return Err(not_archive());
    }
    let dt = ArchiveDatetime::decode14(&rest[..14]).map_err(|_| not_archive())?;
    let mut tail = &rest[14..];
    // Optional replay-mode flag: lowercase letters closed by an underscore.
    let flag_len = tail.bytes().take_while(|b| b.is_ascii_lowercase()).count();
    if flag_len > 0 && tail.as_bytes().get(flag_len) == Some(&b'_') {
        tail = &tail[flag_len + 1..];
    }
    let original = tail.strip_prefix('/').ok_or_else(not_archive)?;
    if !original.contains("://") {
        return Err(not_archive());
    }
    let original = OriginalUri::parse(original).map_err(|_| not_archive())?;
    Ok((dt, original))
}
