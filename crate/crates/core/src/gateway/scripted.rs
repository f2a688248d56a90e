//! Replay responder keyed by request digest.

use std::collections::BTreeMap;
use std::fmt;
use std::io::BufRead;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BackendKind, ChatRequest, GatewayError, RawResponse};

/// One fixture line: `{"request_digest": "...", "text": "..."}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub request_digest: String,
    pub text: String,
}

type ScriptFn = Arc<dyn Fn(&ChatRequest) -> String + Send + Sync>;

#[derive(Clone, Default)]
pub struct ScriptedBackend {
    fixtures: BTreeMap<String, String>,
    fallback: Option<ScriptFn>,
}

impl fmt::Debug for ScriptedBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScriptedBackend")
            .field("fixtures", &self.fixtures.len())
            .field("fallback", &self.fallback.is_some())
            .finish()
    }
}

impl ScriptedBackend {
    pub fn new() -> ScriptedBackend {
        ScriptedBackend::default()
    }

    pub fn with_entry(mut self, digest: impl Into<String>, text: impl Into<String>) -> ScriptedBackend {
        self.fixtures.insert(digest.into(), text.into());
        self
    }

    /// Answers requests without a fixture.
    pub fn with_fallback<F>(mut self, f: F) -> ScriptedBackend
    where
        F: Fn(&ChatRequest) -> String + Send + Sync + 'static,
    {
        self.fallback = Some(Arc::new(f));
        self
    }

    pub fn with_fixed_fallback(self, text: impl Into<String>) -> ScriptedBackend {
        let text = text.into();
        self.with_fallback(move |_| text.clone())
    }

    pub fn load_fixtures<R: BufRead>(mut self, source: R) -> Result<ScriptedBackend, GatewayError> {
        for (i, line) in source.lines().enumerate() {
            let line = line.map_err(|e| GatewayError::InvalidRequest(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ScriptEntry = serde_json::from_str(&line)
                .map_err(|e| GatewayError::InvalidRequest(format!("fixture line {}: {e}", i + 1)))?;
            self.fixtures.insert(entry.request_digest, entry.text);
        }
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.fixtures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixtures.is_empty()
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<RawResponse, GatewayError> {
        let digest = request.digest();
        let text = match self.fixtures.get(&digest) {
            Some(t) => t.clone(),
            None => match &self.fallback {
                Some(f) => f(request),
                None => return Err(GatewayError::NoScript(digest)),
            },
        };
        Ok(RawResponse {
            text,
            model_id: request.model_id.clone(),
            latency: Duration::ZERO,
            backend: BackendKind::Scripted,
            request_digest: digest,
            retries: 0,
            cached: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::Sampling;

    fn req() -> ChatRequest {
        ChatRequest {
            model_id: "m".into(),
            system_prompt: None,
            user_prompt: "Q".into(),
            sampling: Sampling::hosted_chat(),
            iteration: 0,
        }
    }

    #[test]
    fn replays_fixture() {
        let r = req();
        let backend = ScriptedBackend::new().with_entry(r.digest(), "(A)");
        let resp = backend.complete(&r).unwrap();
        assert_eq!(resp.text, "(A)");
        assert_eq!(resp.backend, BackendKind::Scripted);
    }

    #[test]
    fn missing_fixture_without_fallback_errors() {
        assert!(matches!(
            ScriptedBackend::new().complete(&req()),
            Err(GatewayError::NoScript(_))
        ));
        let b = ScriptedBackend::new().with_fixed_fallback("C");
        assert_eq!(b.complete(&req()).unwrap().text, "C");
    }

    #[test]
    fn loads_fixture_lines() {
        let r = req();
        let src = format!("{{\"request_digest\":\"{}\",\"text\":\"B\"}}\n", r.digest());
        let b = ScriptedBackend::new().load_fixtures(src.as_bytes()).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b.complete(&r).unwrap().text, "B");
    }
}
