//! Link-format timemap serialization (`application/link-format` style).
//!
//! A timemap on the wire is a comma-separated list of `<uri>; key="value"`
//! links. The entry with `rel="original"` names the URI-R; entries whose
//! rel contains `memento` carry a `datetime` attribute in RFC 1123 form.
//! Everything else (`self`, `timegate`, ...) is skipped.

use chrono::DateTime;
use thiserror::Error;

use crate::memento::{ArchiveDatetime, MementoUri, OriginalUri, TimeMap};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TimeMapFormatError {
    #[error("timemap has no rel=\"original\" link")]
    MissingOriginal,
    #[error("malformed link segment: {0}")]
    BadLink(String),
    #[error("bad memento datetime: {0}")]
    BadDatetime(String),
    #[error("{0}")]
    Invalid(String),
}

/// Splits on top-level commas, ignoring commas inside `<...>` targets and
/// quoted attribute values. LF and CRLF both act as plain whitespace.
fn split_links(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut in_angle = false;
    let mut in_quote = false;
    for c in text.chars() {
        match c {
            '<' if !in_quote => in_angle = true,
            '>' if !in_quote => in_angle = false,
            '"' if !in_angle => in_quote = !in_quote,
            ',' if !in_angle && !in_quote => {
                out.push(std::mem::take(&mut cur));
                continue;
            }
            _ => {}
        }
        cur.push(c);
    }
    out.push(cur);
    out.into_iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

struct RawLink {
    target: String,
    rel: Vec<String>,
    datetime: Option<String>,
}

fn parse_link(seg: &str) -> Result<RawLink, TimeMapFormatError> {
    let seg = seg.trim();
    let bad = || TimeMapFormatError::BadLink(seg.to_string());
    let start = seg.find('<').ok_or_else(bad)?;
    let end = seg.find('>').ok_or_else(bad)?;
    if start > end {
        return Err(bad());
    }
    let target = seg[start + 1..end].trim().to_string();
    let mut rel = Vec::new();
    let mut datetime = None;
    for param in seg[end + 1..].split(';') {
        let param = param.trim();
        if param.is_empty() {
            continue;
        }
        let Some((key, value)) = param.split_once('=') else {
            continue;
        };
        let value = value.trim().trim_matches('"');
        match key.trim().to_ascii_lowercase().as_str() {
            "rel" => rel = value.split_whitespace().map(|v| v.to_ascii_lowercase()).collect(),
            "datetime" => datetime = Some(value.to_string()),
            _ => {}
        }
    }
    Ok(RawLink { target, rel, datetime })
}

fn parse_rfc1123(s: &str) -> Result<ArchiveDatetime, TimeMapFormatError> {
    let parsed = DateTime::parse_from_rfc2822(s)
        .map_err(|_| TimeMapFormatError::BadDatetime(s.to_string()))?;
    ArchiveDatetime::from_timestamp(parsed.timestamp())
        .ok_or_else(|| TimeMapFormatError::BadDatetime(s.to_string()))
}

/// Parses a link-format timemap into a sorted [`TimeMap`].
pub fn parse_link_timemap(text: &str) -> Result<TimeMap, TimeMapFormatError> {
    let mut original: Option<OriginalUri> = None;
    let mut mementos: Vec<(String, ArchiveDatetime)> = Vec::new();

    for seg in split_links(text) {
        let link = parse_link(&seg)?;
        if link.rel.iter().any(|r| r == "original") {
            let uri = OriginalUri::parse(&link.target)
                .map_err(|e| TimeMapFormatError::Invalid(e.to_string()))?;
            original = Some(uri);
        } else if link.rel.iter().any(|r| r == "memento") {
            let dt = link
                .datetime
                .ok_or_else(|| TimeMapFormatError::BadLink(seg.clone()))?;
            mementos.push((link.target, parse_rfc1123(&dt)?));
        }
        // Unknown rels (self, timegate, ...) are skipped.
    }

    let original = original.ok_or(TimeMapFormatError::MissingOriginal)?;
    let mementos = mementos
        .into_iter()
        .map(|(uri, datetime)| MementoUri {
            uri,
            datetime,
            original: original.clone(),
        })
        .collect();
    TimeMap::new(original, mementos).map_err(|e| TimeMapFormatError::Invalid(e.to_string()))
}

fn rfc1123(dt: ArchiveDatetime) -> String {
    let ts = chrono::DateTime::from_timestamp(dt.timestamp(), 0).unwrap();
    ts.format("%a, %d %b %Y %H:%M:%S GMT").to_string()
}

/// Serializes a timemap in the same link-format the parser accepts.
pub fn write_link_timemap(tm: &TimeMap) -> String {
    let mut out = String::new();
    out.push_str(&format!("<{}>; rel=\"original\",\n", tm.original().as_str()));
    let n = tm.len();
    for (i, m) in tm.mementos().iter().enumerate() {
        let rel = if i == 0 && n > 1 {
            "first memento"
        } else if i + 1 == n && n > 1 {
            "last memento"
        } else {
            "memento"
        };
        out.push_str(&format!(
            "<{}>; rel=\"{}\"; datetime=\"{}\"{}\n",
            m.uri,
            rel,
            rfc1123(m.datetime),
            if i + 1 == n { "" } else { "," }
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = concat!(
        "<http://www.cs.odu.edu/>; rel=\"original\",\n",
        "<http://archive.test/timemap/link/http://www.cs.odu.edu/>; rel=\"self\",\n",
        "<http://archive.test/web/20050331010000/http://www.cs.odu.edu/>; ",
        "rel=\"first memento\"; datetime=\"Thu, 31 Mar 2005 01:00:00 GMT\",\n",
        "<http://archive.test/web/20050514013608/http://www.cs.odu.edu/>; ",
        "rel=\"last memento\"; datetime=\"Sat, 14 May 2005 01:36:08 GMT\"\n",
    );

    #[test]
    fn parses_and_sorts() {
        let tm = parse_link_timemap(SAMPLE).unwrap();
        assert_eq!(tm.original().as_str(), "http://www.cs.odu.edu/");
        assert_eq!(tm.len(), 2);
        assert_eq!(tm.mementos()[0].datetime.encode14(), "20050331010000");
        assert_eq!(tm.mementos()[1].datetime.encode14(), "20050514013608");
    }

    #[test]
    fn accepts_crlf_and_unknown_rels() {
        let crlf = SAMPLE.replace('\n', "\r\n");
        let tm = parse_link_timemap(&crlf).unwrap();
        assert_eq!(tm.len(), 2);

        let with_junk = SAMPLE.replace("rel=\"self\"", "rel=\"timegate weird\"");
        assert_eq!(parse_link_timemap(&with_junk).unwrap().len(), 2);
    }

    #[test]
    fn quoted_commas_do_not_split() {
        // The RFC 1123 datetime contains a comma; the splitter must not
        // break the entry apart.
        let tm = parse_link_timemap(SAMPLE).unwrap();
        assert_eq!(tm.mementos()[1].datetime.encode14(), "20050514013608");
    }

    #[test]
    fn missing_original_is_an_error() {
        let text = "<http://a.test/web/20050101000000/http://x.com/>; rel=\"memento\"; \
                    datetime=\"Sat, 01 Jan 2005 00:00:00 GMT\"";
        assert_eq!(
            parse_link_timemap(text).unwrap_err(),
            TimeMapFormatError::MissingOriginal
        );
    }

    #[test]
    fn write_then_parse_round_trips() {
        let tm = parse_link_timemap(SAMPLE).unwrap();
        let text = write_link_timemap(&tm);
        let back = parse_link_timemap(&text).unwrap();
        assert_eq!(back, tm);
    }
}
