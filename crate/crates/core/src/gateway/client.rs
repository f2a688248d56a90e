use std::sync::Arc;

use super::cache::{CacheRecord, ResponseCache};
use super::http::HttpBackend;
use super::scripted::ScriptedBackend;
use super::synthetic::SyntheticResponder;
use super::{ChatRequest, GatewayError, RawResponse};
use crate::dataset::QuestionRecord;

#[derive(Debug)]
pub enum Backend {
    Http(HttpBackend),
    Scripted(ScriptedBackend),
    Synthetic(SyntheticResponder),
}

/// What the request is about; only the synthetic backend looks at it.
#[derive(Debug, Clone, Copy)]
pub struct QueryContext<'a> {
    pub persona_id: &'a str,
    pub question: &'a QuestionRecord,
}

/// Shared front end: cache lookup, then the backend.
///
/// Safe to share across tasks; the HTTP backend owns the in-flight bound and
/// the rate-limit accounting.
#[derive(Debug)]
pub struct Gateway {
    backend: Backend,
    cache: Option<Arc<ResponseCache>>,
}

impl Gateway {
    pub fn new(backend: Backend) -> Gateway {
        Gateway { backend, cache: None }
    }

    pub fn with_cache(mut self, cache: Arc<ResponseCache>) -> Gateway {
        self.cache = Some(cache);
        self
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    pub async fn complete(
        &self,
        request: &ChatRequest,
        context: QueryContext<'_>,
    ) -> Result<RawResponse, GatewayError> {
        let digest = request.digest();
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(&digest)) {
            return Ok(RawResponse {
                text: hit.text,
                model_id: hit.model_id,
                latency: std::time::Duration::ZERO,
                backend: hit.backend,
                request_digest: digest,
                retries: 0,
                cached: true,
            });
        }
        let mut response = match &self.backend {
            Backend::Http(http) => http.complete(request).await?,
            Backend::Scripted(s) => s.complete(request)?,
            Backend::Synthetic(s) => s.respond(context.persona_id, context.question, request.iteration)?,
        };
        response.model_id = request.model_id.clone();
        response.request_digest = digest;
        if let Some(cache) = &self.cache {
            cache.put(CacheRecord {
                request_digest: response.request_digest.clone(),
                model_id: response.model_id.clone(),
                backend: response.backend,
                text: response.text.clone(),
            })?;
        }
        Ok(response)
    }
}
