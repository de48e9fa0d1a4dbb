//! Anchor link extraction and the per-step common-usable link set.

use std::collections::BTreeSet;

use scraper::{Html, Selector};
use url::Url;

use crate::memento::{parse_wayback_uri, MementoError, OriginalUri};
use crate::rng::WalkRng;

/// A deduplicated, normalized set of URI-Rs. Iteration order is
/// lexicographic, which the walk engine relies on for deterministic
/// selection.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LinkSet(BTreeSet<OriginalUri>);

impl LinkSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, uri: OriginalUri) {
        self.0.insert(uri);
    }

    pub fn contains(&self, uri: &OriginalUri) -> bool {
        self.0.contains(uri)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &OriginalUri> {
        self.0.iter()
    }

    /// Elements of `self` not in `other`, in lexicographic order.
    pub fn minus(&self, other: &LinkSet) -> LinkSet {
        LinkSet(self.0.difference(&other.0).cloned().collect())
    }

    pub fn intersect(&self, other: &LinkSet) -> LinkSet {
        LinkSet(self.0.intersection(&other.0).cloned().collect())
    }

    /// The `i`-th link in lexicographic order.
    pub fn nth(&self, i: usize) -> Option<&OriginalUri> {
        self.0.iter().nth(i)
    }
}

impl FromIterator<OriginalUri> for LinkSet {
    fn from_iter<T: IntoIterator<Item = OriginalUri>>(iter: T) -> Self {
        LinkSet(iter.into_iter().collect())
    }
}

/// Normalizes a URI string into an [`OriginalUri`]: lowercased scheme and
/// host, default port removed, fragment removed, percent-encoding kept.
pub fn normalize_uri(u: &str) -> Result<OriginalUri, MementoError> {
    OriginalUri::parse(u)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExtractOptions {
    /// Strip the archive replay toolbar region before extracting, so
    /// navigation chrome injected by the archive does not contribute links.
    pub strip_chrome: bool,
}

const TOOLBAR_BEGIN: &str = "<!-- BEGIN WAYBACK TOOLBAR INSERT -->";
const TOOLBAR_END: &str = "<!-- END WAYBACK TOOLBAR INSERT -->";

fn strip_toolbar(html: &str) -> String {
    let mut out = String::with_capacity(html.len());
    let mut rest = html;
    while let Some(start) = rest.find(TOOLBAR_BEGIN) {
        out.push_str(&rest[..start]);
        match rest[start..].find(TOOLBAR_END) {
            Some(end) => rest = &rest[start + end + TOOLBAR_END.len()..],
            None => return out, // unterminated region: drop the remainder
        }
    }
    out.push_str(rest);
    out
}

/// Collects the anchor-link URI-Rs of an HTML page.
///
/// Relative hrefs resolve against `base`; archive-rewritten links are
/// unwrapped back to their URI-R; non-HTTP(S) schemes, fragment-only
/// links, and links to the page's own URI-R are dropped. Malformed markup
/// is parsed leniently and unparseable hrefs are skipped.
pub fn extract_links(html: &[u8], base: &str, opts: ExtractOptions) -> LinkSet {
    let text = String::from_utf8_lossy(html);
    let text = if opts.strip_chrome {
        strip_toolbar(&text)
    } else {
        text.into_owned()
    };

    // The page's own URI-R, for self-link exclusion. If the base is an
    // archive replay URI, unwrap it first.
    let self_uri = match parse_wayback_uri(base) {
        Ok((_, r)) => Some(r),
        Err(_) => OriginalUri::parse(base).ok(),
    };
    let base_url = Url::parse(base).ok();

    let doc = Html::parse_document(&text);
    let anchors = Selector::parse("a").unwrap();
    let mut out = LinkSet::new();
    for node in doc.select(&anchors) {
        let Some(href) = node.value().attr("href") else {
            continue;
        };
        let href = href.trim();
        if href.is_empty() || href.starts_with('#') {
            continue;
        }
        let resolved = match &base_url {
            Some(b) => match b.join(href) {
                Ok(u) => u.to_string(),
                Err(_) => continue,
            },
            None => href.to_string(),
        };
        if let Some(uri) = unwrap_to_original(&resolved) {
            if Some(&uri) != self_uri.as_ref() {
                out.insert(uri);
            }
        }
    }
    out
}

/// Unwraps archive-rewritten URIs (possibly nested) down to a plain
/// HTTP(S) URI-R.
fn unwrap_to_original(uri: &str) -> Option<OriginalUri> {
    let mut current = uri.to_string();
    for _ in 0..4 {
        match parse_wayback_uri(&current) {
            Ok((_, r)) => current = r.as_str().to_string(),
            Err(_) => break,
        }
    }
    let parsed = OriginalUri::parse(&current).ok()?;
    let scheme_ok = parsed.as_str().starts_with("http://") || parsed.as_str().starts_with("https://");
    scheme_ok.then_some(parsed)
}

/// The set of common, usable URI-Rs for a walk step:
/// `(la ∩ lw) − lp`. Empty output signals the no-common-links stop.
pub fn common_usable(la: &LinkSet, lw: &LinkSet, lp: &LinkSet) -> LinkSet {
    la.intersect(lw).minus(lp)
}

/// Both relaxed-mode candidate pools were empty; the walk stops.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Exhausted;

/// Relaxed-mode selection when no common usable link exists: draws one
/// unused URI-R from `la − lp` for the sticky side and one from `lw − lp`
/// for the sliding side, in that order.
pub fn relaxed_pair(
    la: &LinkSet,
    lw: &LinkSet,
    lp: &LinkSet,
    rng: &mut WalkRng,
) -> Result<(OriginalUri, OriginalUri), Exhausted> {
    let api_pool = la.minus(lp);
    let ui_pool = lw.minus(lp);
    if api_pool.is_empty() || ui_pool.is_empty() {
        return Err(Exhausted);
    }
    let r_api = api_pool.nth(rng.uniform_index(api_pool.len())).unwrap().clone();
    let r_ui = ui_pool.nth(rng.uniform_index(ui_pool.len())).unwrap().clone();
    Ok((r_api, r_ui))
}
