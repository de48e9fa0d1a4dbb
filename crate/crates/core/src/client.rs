//! Backend-agnostic archive access.
//!
//! The walk engine talks to an archive only through [`Backend`] sessions,
//! so the in-process simulated archive and a real HTTP archive are
//! interchangeable. This module owns the request semantics shared by both:
//! timemap fetching, memento dereferencing with hard and (for the sliding
//! policy) soft redirects, total classification of failures, and the
//! single 503 retry.

use std::sync::LazyLock;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::memento::{
    best_memento, parse_wayback_uri, ArchiveDatetime, MementoUri, OriginalUri, TimeMap,
};
use crate::timemap_link::parse_link_timemap;

/// Transport-level failure: the request never produced an HTTP response.
#[derive(Debug, Error, Clone)]
#[error("download failed: {0}")]
pub struct TransportError(pub String);

/// A raw GET response, reduced to what the harness inspects.
#[derive(Debug, Clone)]
pub struct RawResponse {
    pub status: u16,
    pub content_type: Option<String>,
    pub location: Option<String>,
    pub body: Vec<u8>,
}

/// An archive the harness can walk. `session` hands out per-walk request
/// state; transient-fault behavior (one-shot 503s) is scoped to a session
/// so concurrent walks stay deterministic.
pub trait Backend: Send + Sync {
    /// Replay URI prefix, e.g. `http://web.archive.org`, no trailing slash.
    fn archive_base(&self) -> &str;

    fn session(&self) -> Box<dyn BackendSession>;
}

pub trait BackendSession: Send {
    fn get(&mut self, uri: &str) -> Result<RawResponse, TransportError>;
}

/// Closed classification of fetch results (success plus every failure
/// class a walk step can stop on at the fetch level).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutcomeKind {
    Success,
    Http403,
    Http404,
    Http503,
    DownloadFailed,
    NotHtml,
    Other,
}

/// Outcome of a fetch-level operation. `kind == Success` implies
/// `final_memento` is present; `NotHtml` means a body was retrieved but
/// the content is not HTML.
#[derive(Debug, Clone)]
pub struct FetchOutcome {
    pub kind: OutcomeKind,
    pub body: Option<Vec<u8>>,
    pub final_memento: Option<MementoUri>,
    pub redirect_hops: u32,
}

impl FetchOutcome {
    fn failure(kind: OutcomeKind, hops: u32) -> Self {
        FetchOutcome { kind, body: None, final_memento: None, redirect_hops: hops }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HopKind {
    Hard,
    Soft,
}

/// The redirect path taken dereferencing one memento. `final_memento`
/// carries the datetime drift is computed from, and `body` the content
/// links are extracted from.
#[derive(Debug, Clone)]
pub struct DereferenceChain {
    pub requested: MementoUri,
    pub hops: Vec<(String, HopKind)>,
    pub final_memento: MementoUri,
    pub body: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct ClientConfig {
    /// Combined hard + soft redirect hop limit per dereference.
    pub redirect_limit: u32,
    /// Delay before the single retry of a 503 outcome.
    pub retry_delay: Duration,
    /// Detect script-based soft redirects (`location.replace(...)` and
    /// friends) in status-200 bodies.
    pub detect_script_redirects: bool,
    /// Detect `<meta http-equiv="refresh">` soft redirects.
    pub detect_meta_refresh: bool,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            redirect_limit: 10,
            retry_delay: Duration::from_secs(1),
            detect_script_redirects: true,
            detect_meta_refresh: true,
        }
    }
}

/// One walk's view of an archive: a backend session plus the shared
/// request semantics.
pub struct ArchiveClient {
    session: Box<dyn BackendSession>,
    base: String,
    cfg: ClientConfig,
}

impl ArchiveClient {
    pub fn new(backend: &dyn Backend, cfg: ClientConfig) -> Self {
        ArchiveClient {
            session: backend.session(),
            base: backend.archive_base().trim_end_matches('/').to_string(),
            cfg,
        }
    }

    pub fn archive_base(&self) -> &str {
        &self.base
    }

    pub fn timemap_uri(&self, r: &OriginalUri) -> String {
        format!("{}/timemap/link/{}", self.base, r.as_str())
    }

    /// Fetches and parses the timemap for `r`. A 404 — or an empty
    /// timemap — means the URI-R is not archived.
    pub fn fetch_timemap(&mut self, r: &OriginalUri) -> Result<TimeMap, FetchOutcome> {
        match self.fetch_timemap_once(r) {
            Err(o) if o.kind == OutcomeKind::Http503 => {
                std::thread::sleep(self.cfg.retry_delay);
                self.fetch_timemap_once(r)
            }
            other => other,
        }
    }

    fn fetch_timemap_once(&mut self, r: &OriginalUri) -> Result<TimeMap, FetchOutcome> {
        let mut uri = self.timemap_uri(r);
        let mut hops = 0u32;
        loop {
            let resp = match self.session.get(&uri) {
                Ok(resp) => resp,
                Err(_) => return Err(FetchOutcome::failure(OutcomeKind::DownloadFailed, hops)),
            };
            match classify_status(resp.status) {
                StatusClass::Ok => {
                    let text = String::from_utf8_lossy(&resp.body);
                    let tm = parse_link_timemap(&text)
                        .map_err(|_| FetchOutcome::failure(OutcomeKind::Other, hops))?;
                    if tm.is_empty() {
                        return Err(FetchOutcome::failure(OutcomeKind::Http404, hops));
                    }
                    return Ok(tm);
                }
                StatusClass::Redirect => {
                    hops += 1;
                    if hops > self.cfg.redirect_limit {
                        return Err(FetchOutcome::failure(OutcomeKind::Other, hops));
                    }
                    match resolve_location(&uri, resp.location.as_deref()) {
                        Some(next) => uri = next,
                        None => return Err(FetchOutcome::failure(OutcomeKind::Other, hops)),
                    }
                }
                StatusClass::Failure(kind) => return Err(FetchOutcome::failure(kind, hops)),
            }
        }
    }

    /// Sticky-policy dereference: selects the memento nearest `t1` from
    /// the timemap and follows hard redirects only.
    pub fn dereference_sticky(
        &mut self,
        r: &OriginalUri,
        t1: ArchiveDatetime,
        tm: &TimeMap,
    ) -> Result<DereferenceChain, FetchOutcome> {
        debug_assert_eq!(tm.original(), r);
        let requested = best_memento(tm, t1)
            .map_err(|_| FetchOutcome::failure(OutcomeKind::Other, 0))?
            .clone();
        self.dereference(requested, false)
    }

    /// Sliding-policy dereference: follows hard redirects and soft
    /// (script/meta-refresh) redirects whose target is an archive URI.
    pub fn dereference_sliding(&mut self, m: MementoUri) -> Result<DereferenceChain, FetchOutcome> {
        self.dereference(m, true)
    }

    fn dereference(
        &mut self,
        requested: MementoUri,
        follow_soft: bool,
    ) -> Result<DereferenceChain, FetchOutcome> {
        match self.dereference_once(requested.clone(), follow_soft) {
            Err(o) if o.kind == OutcomeKind::Http503 => {
                std::thread::sleep(self.cfg.retry_delay);
                self.dereference_once(requested, follow_soft)
            }
            other => other,
        }
    }

    fn dereference_once(
        &mut self,
        requested: MementoUri,
        follow_soft: bool,
    ) -> Result<DereferenceChain, FetchOutcome> {
        let mut uri = requested.uri.clone();
        let mut hops: Vec<(String, HopKind)> = Vec::new();
        loop {
            let resp = match self.session.get(&uri) {
                Ok(resp) => resp,
                Err(_) => {
                    return Err(FetchOutcome::failure(
                        OutcomeKind::DownloadFailed,
                        hops.len() as u32,
                    ))
                }
            };
            match classify_status(resp.status) {
                StatusClass::Ok => {
                    if follow_soft {
                        if let Some(target) = self.soft_redirect_target(&resp, &uri) {
                            if hops.len() as u32 >= self.cfg.redirect_limit {
                                return Err(FetchOutcome::failure(
                                    OutcomeKind::Other,
                                    hops.len() as u32,
                                ));
                            }
                            hops.push((target.clone(), HopKind::Soft));
                            uri = target;
                            continue;
                        }
                    }
                    let (datetime, original) = match parse_wayback_uri(&uri) {
                        Ok(parts) => parts,
                        Err(_) => {
                            // Redirected off the archive entirely.
                            return Err(FetchOutcome::failure(
                                OutcomeKind::Other,
                                hops.len() as u32,
                            ));
                        }
                    };
                    let final_memento = MementoUri { uri: uri.clone(), datetime, original };
                    if !is_html(resp.content_type.as_deref(), &resp.body) {
                        return Err(FetchOutcome {
                            kind: OutcomeKind::NotHtml,
                            body: Some(resp.body),
                            final_memento: Some(final_memento),
                            redirect_hops: hops.len() as u32,
                        });
                    }
                    return Ok(DereferenceChain {
                        requested,
                        hops,
                        final_memento,
                        body: resp.body,
                    });
                }
                StatusClass::Redirect => {
                    if hops.len() as u32 >= self.cfg.redirect_limit {
                        return Err(FetchOutcome::failure(OutcomeKind::Other, hops.len() as u32));
                    }
                    match resolve_location(&uri, resp.location.as_deref()) {
                        Some(next) => {
                            hops.push((next.clone(), HopKind::Hard));
                            uri = next;
                        }
                        None => {
                            return Err(FetchOutcome::failure(
                                OutcomeKind::Other,
                                hops.len() as u32,
                            ))
                        }
                    }
                }
                StatusClass::Failure(kind) => {
                    return Err(FetchOutcome::failure(kind, hops.len() as u32))
                }
            }
        }
    }

    /// First soft-redirect target in the body, if detection is enabled
    /// and the target resolves to an archive URI.
    fn soft_redirect_target(&self, resp: &RawResponse, current: &str) -> Option<String> {
        if !is_html(resp.content_type.as_deref(), &resp.body) {
            return None;
        }
        let text = String::from_utf8_lossy(&resp.body);
        let mut candidates: Vec<(usize, String)> = Vec::new();
        if self.cfg.detect_script_redirects {
            if let Some(c) = SCRIPT_REDIRECT.captures(&text) {
                let m = c.get(1).unwrap();
                candidates.push((m.start(), m.as_str().to_string()));
            }
        }
        if self.cfg.detect_meta_refresh {
            if let Some(c) = META_REFRESH.captures(&text) {
                let m = c.get(1).unwrap();
                candidates.push((m.start(), m.as_str().to_string()));
            }
        }
        let (_, raw) = candidates.into_iter().min_by_key(|(pos, _)| *pos)?;
        let resolved = resolve_location(current, Some(&raw))?;
        parse_wayback_uri(&resolved).ok()?;
        Some(resolved)
    }
}

static SCRIPT_REDIRECT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r#"(?:window\.|document\.|top\.)?location(?:\.href|\.replace)?\s*[=(]\s*["']([^"']+)["']"#,
    )
    .unwrap()
});

static META_REFRESH: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r#"(?is)<meta[^>]*http-equiv\s*=\s*["']?refresh["']?[^>]*content\s*=\s*["'][^"';]*;\s*url\s*=\s*([^"'>\s]+)"#,
    )
    .unwrap()
});

enum StatusClass {
    Ok,
    Redirect,
    Failure(OutcomeKind),
}

/// Total mapping from HTTP status to outcome class.
fn classify_status(status: u16) -> StatusClass {
    match status {
        200 => StatusClass::Ok,
        301 | 302 | 303 | 307 | 308 => StatusClass::Redirect,
        403 => StatusClass::Failure(OutcomeKind::Http403),
        404 | 410 => StatusClass::Failure(OutcomeKind::Http404),
        503 => StatusClass::Failure(OutcomeKind::Http503),
        _ => StatusClass::Failure(OutcomeKind::Other),
    }
}

fn resolve_location(current: &str, location: Option<&str>) -> Option<String> {
    let location = location?.trim();
    if location.is_empty() {
        return None;
    }
    match Url::parse(current) {
        Ok(base) => base.join(location).ok().map(|u| u.to_string()),
        Err(_) => Some(location.to_string()),
    }
}

/// HTML when the Content-Type says `text/html`; with no Content-Type,
/// sniffs a leading `<html` / `<!doctype` token.
pub fn is_html(content_type: Option<&str>, body: &[u8]) -> bool {
    match content_type {
        Some(ct) => ct.trim().to_ascii_lowercase().starts_with("text/html"),
        None => {
            let head = String::from_utf8_lossy(&body[..body.len().min(256)]);
            let head = head.trim_start().to_ascii_lowercase();
            head.starts_with("<html") || head.starts_with("<!doctype")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;
    use std::sync::Arc;

    /// Canned-response backend for exercising the client state machine.
    struct Canned {
        responses: Arc<HashMap<String, Vec<ScriptedResponse>>>,
    }

    #[derive(Clone)]
    enum ScriptedResponse {
        Ok(&'static str, &'static str),
        Status(u16),
        Redirect(&'static str),
        Fail,
    }

    struct CannedSession {
        responses: Arc<HashMap<String, Vec<ScriptedResponse>>>,
        counts: HashMap<String, usize>,
    }

    impl Backend for Canned {
        fn archive_base(&self) -> &str {
            "http://a.test"
        }
        fn session(&self) -> Box<dyn BackendSession> {
            Box::new(CannedSession {
                responses: Arc::clone(&self.responses),
                counts: HashMap::new(),
            })
        }
    }

    impl BackendSession for CannedSession {
        fn get(&mut self, uri: &str) -> Result<RawResponse, TransportError> {
            let n = self.counts.entry(uri.to_string()).or_insert(0);
            let scripted = self
                .responses
                .get(uri)
                .and_then(|v| v.get((*n).min(v.len() - 1)))
                .cloned()
                .unwrap_or(ScriptedResponse::Status(404));
            *n += 1;
            match scripted {
                ScriptedResponse::Ok(ct, body) => Ok(RawResponse {
                    status: 200,
                    content_type: Some(ct.to_string()),
                    location: None,
                    body: body.as_bytes().to_vec(),
                }),
                ScriptedResponse::Status(s) => Ok(RawResponse {
                    status: s,
                    content_type: None,
                    location: None,
                    body: Vec::new(),
                }),
                ScriptedResponse::Redirect(to) => Ok(RawResponse {
                    status: 301,
                    content_type: None,
                    location: Some(to.to_string()),
                    body: Vec::new(),
                }),
                ScriptedResponse::Fail => Err(TransportError("connection reset".into())),
            }
        }
    }

    fn canned(entries: &[(&str, Vec<ScriptedResponse>)]) -> Canned {
        Canned {
            responses: Arc::new(
                entries.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
            ),
        }
    }

    fn client(backend: &Canned) -> ArchiveClient {
        let cfg = ClientConfig { retry_delay: Duration::from_millis(0), ..Default::default() };
        ArchiveClient::new(backend, cfg)
    }

    fn memento(uri: &str) -> MementoUri {
        let (datetime, original) = parse_wayback_uri(uri).unwrap();
        MementoUri { uri: uri.to_string(), datetime, original }
    }

    const M1: &str = "http://a.test/web/20050101000000/http://x.com/";
    const M2: &str = "http://a.test/web/20060101000000/http://x.com/";

    #[test]
    fn hard_redirect_chain_lands_on_final_memento() {
        let backend = canned(&[
            (M1, vec![ScriptedResponse::Redirect(M2)]),
            (M2, vec![ScriptedResponse::Ok("text/html", "<html><body>hi</body></html>")]),
        ]);
        let chain = client(&backend).dereference_sliding(memento(M1)).unwrap();
        assert_eq!(chain.hops, vec![(M2.to_string(), HopKind::Hard)]);
        assert_eq!(chain.final_memento.datetime.encode14(), "20060101000000");
    }

    #[test]
    fn soft_redirect_followed_only_when_sliding() {
        let soft_body = r#"<html><script>window.location.replace("/web/20060101000000/http://x.com/");</script></html>"#;
        let backend = canned(&[
            (M1, vec![ScriptedResponse::Ok("text/html", soft_body)]),
            (M2, vec![ScriptedResponse::Ok("text/html", "<html>done</html>")]),
        ]);
        let chain = client(&backend).dereference_sliding(memento(M1)).unwrap();
        assert_eq!(chain.hops, vec![(M2.to_string(), HopKind::Soft)]);

        // The sticky path must not follow it.
        let r = OriginalUri::parse("http://x.com/").unwrap();
        let tm = TimeMap::new(r.clone(), vec![memento(M1)]).unwrap();
        let t1 = ArchiveDatetime::decode14("20050101000000").unwrap();
        let chain = client(&backend).dereference_sticky(&r, t1, &tm).unwrap();
        assert!(chain.hops.is_empty());
        assert_eq!(chain.final_memento.uri, M1);
    }

    #[test]
    fn meta_refresh_detected() {
        let body = r#"<html><head><meta http-equiv="refresh" content="0; url=/web/20060101000000/http://x.com/"></head></html>"#;
        let backend = canned(&[
            (M1, vec![ScriptedResponse::Ok("text/html", body)]),
            (M2, vec![ScriptedResponse::Ok("text/html", "<html>done</html>")]),
        ]);
        let chain = client(&backend).dereference_sliding(memento(M1)).unwrap();
        assert_eq!(chain.hops.len(), 1);
        assert_eq!(chain.final_memento.uri, M2);
    }

    #[test]
    fn soft_redirect_loop_exceeds_limit_as_other() {
        let loop_a = r#"<html><script>location.href="/web/20060101000000/http://x.com/"</script></html>"#;
        let loop_b = r#"<html><script>location.href="/web/20050101000000/http://x.com/"</script></html>"#;
        let backend = canned(&[
            (M1, vec![ScriptedResponse::Ok("text/html", loop_a)]),
            (M2, vec![ScriptedResponse::Ok("text/html", loop_b)]),
        ]);
        let err = client(&backend).dereference_sliding(memento(M1)).unwrap_err();
        assert_eq!(err.kind, OutcomeKind::Other);
        assert_eq!(err.redirect_hops, 10);
    }

    #[test]
    fn retry_503_then_success_and_then_other_statuses() {
        let tm_uri = "http://a.test/timemap/link/http://x.com/";
        let tm_body = "<http://x.com/>; rel=\"original\",\n\
             <http://a.test/web/20050101000000/http://x.com/>; rel=\"memento\"; \
             datetime=\"Sat, 01 Jan 2005 00:00:00 GMT\"";
        // 503 then 200.
        let backend = canned(&[(
            tm_uri,
            vec![ScriptedResponse::Status(503), ScriptedResponse::Ok("application/link-format", tm_body)],
        )]);
        let r = OriginalUri::parse("http://x.com/").unwrap();
        let tm = client(&backend).fetch_timemap(&r).unwrap();
        assert_eq!(tm.len(), 1);

        // 503 then 503 is final.
        let backend = canned(&[(tm_uri, vec![ScriptedResponse::Status(503)])]);
        let err = client(&backend).fetch_timemap(&r).unwrap_err();
        assert_eq!(err.kind, OutcomeKind::Http503);

        // 503 then 404 resolves to 404.
        let backend = canned(&[(
            tm_uri,
            vec![ScriptedResponse::Status(503), ScriptedResponse::Status(404)],
        )]);
        let err = client(&backend).fetch_timemap(&r).unwrap_err();
        assert_eq!(err.kind, OutcomeKind::Http404);
    }

    #[test]
    fn not_html_detected_by_content_type_and_sniffing() {
        assert!(is_html(Some("text/html; charset=utf-8"), b""));
        assert!(!is_html(Some("application/pdf"), b"<html>"));
        assert!(is_html(None, b"  <!DOCTYPE html><html>"));
        assert!(!is_html(None, b"%PDF-1.4"));

        let backend = canned(&[(M1, vec![ScriptedResponse::Ok("application/pdf", "junk")])]);
        let err = client(&backend).dereference_sliding(memento(M1)).unwrap_err();
        assert_eq!(err.kind, OutcomeKind::NotHtml);
        assert!(err.final_memento.is_some());
        assert!(err.body.is_some());
    }

    #[test]
    fn transport_failure_classified_as_download_failed() {
        let backend = canned(&[(M1, vec![ScriptedResponse::Fail])]);
        let err = client(&backend).dereference_sliding(memento(M1)).unwrap_err();
        assert_eq!(err.kind, OutcomeKind::DownloadFailed);
    }

    #[test]
    fn empty_timemap_classified_as_not_archived() {
        let tm_uri = "http://a.test/timemap/link/http://x.com/";
        let backend = canned(&[(
            tm_uri,
            vec![ScriptedResponse::Ok("application/link-format", "<http://x.com/>; rel=\"original\"")],
        )]);
        let r = OriginalUri::parse("http://x.com/").unwrap();
        let err = client(&backend).fetch_timemap(&r).unwrap_err();
        assert_eq!(err.kind, OutcomeKind::Http404);
    }

    #[test]
    fn redirect_off_archive_is_other() {
        let backend = canned(&[
            (M1, vec![ScriptedResponse::Redirect("http://elsewhere.com/page")]),
            ("http://elsewhere.com/page", vec![ScriptedResponse::Ok("text/html", "<html></html>")]),
        ]);
        let err = client(&backend).dereference_sliding(memento(M1)).unwrap_err();
        assert_eq!(err.kind, OutcomeKind::Other);
    }
}
