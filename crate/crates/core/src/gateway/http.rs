//! OpenAI-compatible `/chat/completions` client with retry, rate limiting and
//! an in-flight bound.

use std::collections::VecDeque;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::{Mutex, Semaphore};

use super::{BackendKind, ChatRequest, GatewayError, RawResponse};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay_ms: 500,
            max_delay_ms: 30_000,
        }
    }
}

impl RetryPolicy {
    /// Exponential backoff with jitter in [50%, 100%] of the nominal delay.
    fn delay(&self, retry: u32, rng: &mut impl Rng) -> Duration {
        let nominal = self
            .base_delay_ms
            .saturating_mul(1u64 << retry.min(20))
            .min(self.max_delay_ms);
        let jittered = (nominal as f64 * rng.gen_range(0.5..=1.0)) as u64;
        Duration::from_millis(jittered)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateLimit {
    pub max_requests: u32,
    pub interval_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    /// Base URL up to and including the API version, e.g. `https://api.openai.com/v1`.
    pub base_url: String,
    #[serde(skip_serializing, default)]
    pub api_key: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub rate_limit: Option<RateLimit>,
}

fn default_timeout_ms() -> u64 {
    60_000
}

fn default_in_flight() -> usize {
    4
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>) -> HttpConfig {
        HttpConfig {
            base_url: base_url.into(),
            api_key: None,
            timeout_ms: default_timeout_ms(),
            retry: RetryPolicy::default(),
            max_in_flight: default_in_flight(),
            rate_limit: None,
        }
    }
}

/// Sliding-window request budget.
#[derive(Debug)]
struct RateLimiter {
    limit: Option<RateLimit>,
    sent: Mutex<VecDeque<Instant>>,
}

impl RateLimiter {
    async fn acquire(&self) {
        let Some(limit) = &self.limit else { return };
        let window = Duration::from_millis(limit.interval_ms);
        loop {
            let wait = {
                let mut sent = self.sent.lock().await;
                let now = Instant::now();
                while sent.front().is_some_and(|t| now.duration_since(*t) >= window) {
                    sent.pop_front();
                }
                if (sent.len() as u32) < limit.max_requests {
                    sent.push_back(now);
                    return;
                }
                window - now.duration_since(*sent.front().expect("window is full"))
            };
            tokio::time::sleep(wait).await;
        }
    }
}

#[derive(Debug)]
pub struct HttpBackend {
    config: HttpConfig,
    client: reqwest::Client,
    in_flight: Arc<Semaphore>,
    limiter: RateLimiter,
}

enum Attempt {
    Done(String),
    Retry {
        status: Option<u16>,
        message: String,
        timeout: bool,
        retry_after: Option<Duration>,
    },
    Fatal(GatewayError),
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<HttpBackend, GatewayError> {
        let client = reqwest::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        Ok(HttpBackend {
            in_flight: Arc::new(Semaphore::new(config.max_in_flight.max(1))),
            limiter: RateLimiter {
                limit: config.rate_limit.clone(),
                sent: Mutex::new(VecDeque::new()),
            },
            client,
            config,
        })
    }

    fn body(request: &ChatRequest) -> serde_json::Value {
        let mut messages = Vec::with_capacity(2);
        if let Some(system) = &request.system_prompt {
            messages.push(json!({"role": "system", "content": system}));
        }
        messages.push(json!({"role": "user", "content": request.user_prompt}));
        let s = &request.sampling;
        let mut body = json!({
            "model": request.model_id,
            "messages": messages,
            "temperature": s.temperature,
            "top_p": s.top_p,
            "max_tokens": s.max_new_tokens,
            "presence_penalty": s.presence_penalty,
            "frequency_penalty": s.frequency_penalty,
            "n": 1,
        });
        if s.repetition_penalty != 1.0 {
            body["repetition_penalty"] = json!(s.repetition_penalty);
        }
        body
    }

    async fn attempt(&self, body: &serde_json::Value) -> Attempt {
        let _permit = self.in_flight.acquire().await.expect("semaphore is never closed");
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let mut builder = self.client.post(url).json(body);
        if let Some(key) = &self.config.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = match builder.send().await {
            Ok(r) => r,
            Err(e) if e.is_timeout() => {
                return Attempt::Retry {
                    status: None,
                    message: e.to_string(),
                    timeout: true,
                    retry_after: None,
                }
            }
            Err(e) => return Attempt::Fatal(GatewayError::Transport(e.to_string())),
        };
        let status = response.status().as_u16();
        let retry_after = response
            .headers()
            .get(reqwest::header::RETRY_AFTER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let text = match response.text().await {
            Ok(t) => t,
            Err(e) if e.is_timeout() => {
                return Attempt::Retry {
                    status: Some(status),
                    message: e.to_string(),
                    timeout: true,
                    retry_after: None,
                }
            }
            Err(e) => return Attempt::Fatal(GatewayError::Transport(e.to_string())),
        };
        match status {
            200..=299 => match parse_content(&text) {
                Ok(content) => Attempt::Done(content),
                Err(e) => Attempt::Fatal(e),
            },
            401 | 403 => Attempt::Fatal(GatewayError::Authentication { status }),
            429 | 500..=599 => Attempt::Retry {
                status: Some(status),
                message: text,
                timeout: false,
                retry_after,
            },
            _ => Attempt::Fatal(GatewayError::Rejected { status, message: text }),
        }
    }

    pub async fn complete(&self, request: &ChatRequest) -> Result<RawResponse, GatewayError> {
        request.sampling.validate()?;
        let digest = request.digest();
        let body = Self::body(request);
        let mut jitter = ChaCha8Rng::seed_from_u64(u64::from_str_radix(&digest[..16], 16).unwrap_or(0));
        let started = Instant::now();
        let max_attempts = self.config.retry.max_attempts.max(1);
        let mut retries = 0;
        loop {
            self.limiter.acquire().await;
            match self.attempt(&body).await {
                Attempt::Done(text) => {
                    return Ok(RawResponse {
                        text,
                        model_id: request.model_id.clone(),
                        latency: started.elapsed(),
                        backend: BackendKind::Http,
                        request_digest: digest,
                        retries,
                        cached: false,
                    })
                }
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry {
                    status,
                    message,
                    timeout,
                    retry_after,
                } => {
                    let attempts = retries + 1;
                    if attempts >= max_attempts {
                        return Err(if timeout {
                            GatewayError::Timeout { attempts }
                        } else {
                            GatewayError::RetriesExhausted {
                                attempts,
                                last_status: status,
                                message,
                            }
                        });
                    }
                    let mut delay = self.config.retry.delay(retries, &mut jitter);
                    if let Some(hint) = retry_after {
                        delay = delay
                            .max(hint)
                            .min(Duration::from_millis(self.config.retry.max_delay_ms));
                    }
                    tracing::debug!(?status, retry = attempts, ?delay, "retrying chat completion");
                    tokio::time::sleep(delay).await;
                    retries += 1;
                }
            }
        }
    }
}

fn parse_content(body: &str) -> Result<String, GatewayError> {
    #[derive(Deserialize)]
    struct Completion {
        choices: Vec<ChoiceBody>,
    }
    #[derive(Deserialize)]
    struct ChoiceBody {
        message: Message,
    }
    #[derive(Deserialize)]
    struct Message {
        content: Option<String>,
    }
    let parsed: Completion = serde_json::from_str(body).map_err(|e| GatewayError::Protocol(e.to_string()))?;
    let first = parsed
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| GatewayError::Protocol("no choices in response".into()))?;
    first
        .message
        .content
        .ok_or_else(|| GatewayError::Protocol("first choice has no message content".into()))
}
