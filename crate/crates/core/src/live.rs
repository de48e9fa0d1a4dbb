//! HTTP backend for a real Memento-speaking archive.
//!
//! Redirects are never followed here — the client owns redirect semantics —
//! and requests to the same host are spaced by a politeness delay shared
//! across all sessions.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use crate::client::{Backend, BackendSession, RawResponse, TransportError};

const DEFAULT_USER_AGENT: &str = concat!("driftwalk/", env!("CARGO_PKG_VERSION"));

/// Schedules per-host request slots so no host is hit more often than the
/// configured minimum interval.
struct HostLimiter {
    delay: Duration,
    next_slot: Mutex<HashMap<String, Instant>>,
}

impl HostLimiter {
    fn wait_turn(&self, host: &str) {
        if self.delay.is_zero() {
            return;
        }
        let start = {
            let mut slots = self.next_slot.lock().unwrap();
            let now = Instant::now();
            let slot = slots.entry(host.to_string()).or_insert(now);
            let start = (*slot).max(now);
            *slot = start + self.delay;
            start
        };
        let now = Instant::now();
        if start > now {
            std::thread::sleep(start - now);
        }
    }
}

pub struct LiveBackend {
    base: String,
    client: reqwest::blocking::Client,
    limiter: Arc<HostLimiter>,
}

impl LiveBackend {
    pub fn new(
        archive_base: &str,
        politeness: Duration,
        user_agent: Option<&str>,
    ) -> Result<Self, String> {
        let client = reqwest::blocking::Client::builder()
            .redirect(reqwest::redirect::Policy::none())
            .timeout(Duration::from_secs(30))
            .user_agent(user_agent.unwrap_or(DEFAULT_USER_AGENT))
            .build()
            .map_err(|e| e.to_string())?;
        Ok(LiveBackend {
            base: archive_base.trim_end_matches('/').to_string(),
            client,
            limiter: Arc::new(HostLimiter { delay: politeness, next_slot: Mutex::new(HashMap::new()) }),
        })
    }
}

impl Backend for LiveBackend {
    fn archive_base(&self) -> &str {
        &self.base
    }

    fn session(&self) -> Box<dyn BackendSession> {
        Box::new(LiveSession { client: self.client.clone(), limiter: Arc::clone(&self.limiter) })
    }
}

struct LiveSession {
    client: reqwest::blocking::Client,
    limiter: Arc<HostLimiter>,
}

impl BackendSession for LiveSession {
    fn get(&mut self, uri: &str) -> Result<RawResponse, TransportError> {
        if let Ok(url) = url::Url::parse(uri) {
            if let Some(host) = url.host_str() {
                self.limiter.wait_turn(host);
            }
        }
        let resp = self
            .client
            .get(uri)
            .send()
            .map_err(|e| TransportError(e.to_string()))?;
        let status = resp.status().as_u16();
        let header = |name: &str| {
            resp.headers()
                .get(name)
                .and_then(|v| v.to_str().ok())
                .map(|v| v.to_string())
        };
        let content_type = header("content-type");
        let location = header("location");
        let body = resp.bytes().map_err(|e| TransportError(e.to_string()))?.to_vec();
        Ok(RawResponse { status, content_type, location, body })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn limiter_spaces_same_host_requests() {
        let limiter = HostLimiter {
            delay: Duration::from_millis(20),
            next_slot: Mutex::new(HashMap::new()),
        };
        let t0 = Instant::now();
        limiter.wait_turn("a.test");
        limiter.wait_turn("a.test");
        limiter.wait_turn("a.test");
        assert!(t0.elapsed() >= Duration::from_millis(40));

        // Different hosts are independent.
        let t1 = Instant::now();
        limiter.wait_turn("b.test");
        assert!(t1.elapsed() < Duration::from_millis(15));
    }
}
