//! Caption cleaning through a pluggable text-cleaning client.
//!
//! The toolkit never trusts client output blindly: results that are empty or
//! noticeably longer than the input are discarded in favour of the raw text.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CleanError {
    #[error("transport failure: {message}")]
    Transport { message: String, retriable: bool },
    #[error("malformed response: {0}")]
    Response(String),
}

impl CleanError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, CleanError::Transport { retriable: true, .. })
    }
}

pub trait CaptionCleaner: Send + Sync {
    fn clean(&self, raw: &str) -> std::result::Result<String, CleanError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            backoff_ms: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanOutcome {
    pub text: String,
    pub attempts: u32,
    pub used_fallback: bool,
    pub warning: Option<String>,
}

/// Cleans one caption, retrying retriable transport failures and falling
/// back to the raw text when the client fails or returns an unusable result.
pub fn clean_caption(raw: &str, client: &dyn CaptionCleaner, retry: &RetryPolicy) -> Result<CleanOutcome> {
    if raw.trim().is_empty() {
        return Err(Error::validation("caption", "raw caption is empty"));
    }
    let fallback = |attempts, warning: String| {
        tracing::warn!("{warning}");
        Ok(CleanOutcome {
            text: raw.to_string(),
            attempts,
            used_fallback: true,
            warning: Some(warning),
        })
    };
    let max = retry.max_attempts.max(1);
    let mut attempts = 0;
    loop {
        attempts += 1;
        match client.clean(raw) {
            Ok(out) => {
                let out = out.trim().to_string();
                let (n_out, n_raw) = (out.chars().count(), raw.chars().count());
                if out.is_empty() {
                    return fallback(attempts, "cleaner returned empty text; kept raw caption".into());
                }
                if n_out * 10 > n_raw * 11 {
                    return fallback(
                        attempts,
                        format!("cleaner output grew from {n_raw} to {n_out} chars; kept raw caption"),
                    );
                }
                return Ok(CleanOutcome {
                    text: out,
                    attempts,
                    used_fallback: false,
                    warning: None,
                });
            }
            Err(e) if e.is_retriable() && attempts < max => {
                tracing::debug!(attempt = attempts, "retrying cleaner: {e}");
                std::thread::sleep(Duration::from_millis(retry.backoff_ms * attempts as u64));
            }
            Err(e) => {
                return fallback(attempts, format!("cleaner failed after {attempts} attempt(s): {e}"));
            }
        }
    }
}

/// Cleans many captions with at most `max_in_flight` concurrent client calls.
/// Output order matches input order; failures are isolated per caption.
pub fn clean_many(
    raws: &[String],
    client: &dyn CaptionCleaner,
    retry: &RetryPolicy,
    max_in_flight: usize,
) -> Vec<Result<CleanOutcome>> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<CleanOutcome>>>> = Mutex::new(vec![None; raws.len()]);
    std::thread::scope(|s| {
        for _ in 0..max_in_flight.max(1).min(raws.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= raws.len() {
                    break;
                }
                let r = clean_caption(&raws[i], client, retry);
                results.lock().expect("results lock")[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|r| r.expect("every caption processed"))
        .collect()
}

/// Offline cleaner: drops every sentence that matches one of the configured
/// boilerplate patterns (auction lots, condition notes, dimensions, ...).
#[derive(Debug, Clone)]
pub struct MockCleaner {
    patterns: Vec<Regex>,
}

pub const DEFAULT_BOILERPLATE: &[&str] = &[
    r"(?i)\bcondition\b",
    r"(?i)\bauction\b",
    r"(?i)\blot\s+\d+",
    r"(?i)\bestimate\b",
    r"(?i)\bprovenance\b",
    r"(?i)\d+(\.\d+)?\s*[x×]\s*\d+(\.\d+)?\s*(cm|mm|in)\b",
    r"(?i)\bsize\b",
];

impl Default for MockCleaner {
    fn default() -> Self {
        Self::new(DEFAULT_BOILERPLATE).expect("default patterns compile")
    }
}

impl MockCleaner {
    pub fn new<S: AsRef<str>>(patterns: &[S]) -> Result<Self> {
        let patterns = patterns
            .iter()
            .map(|p| Regex::new(p.as_ref()).map_err(|e| Error::Config(format!("bad pattern: {e}"))))
            .collect::<Result<_>>()?;
        Ok(Self { patterns })
    }
}

// Sentences end at '.', '!' or '?' followed by whitespace or end of text.
fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let bytes: Vec<(usize, char)> = text.char_indices().collect();
    for (k, &(i, c)) in bytes.iter().enumerate() {
        if matches!(c, '.' | '!' | '?') {
            let next_is_break = bytes.get(k + 1).is_none_or(|&(_, n)| n.is_whitespace());
            if next_is_break {
                let end = i + c.len_utf8();
                out.push(&text[start..end]);
                start = end;
            }
        }
    }
    if start < text.len() {
        out.push(&text[start..]);
    }
    out
}

impl CaptionCleaner for MockCleaner {
    fn clean(&self, raw: &str) -> std::result::Result<String, CleanError> {
        let kept: Vec<&str> = sentences(raw)
            .into_iter()
            .map(str::trim)
            .filter(|s| !s.is_empty() && !self.patterns.iter().any(|p| p.is_match(s)))
            .collect();
        Ok(kept.join(" "))
    }
}

/// Settings for a remote chat-completion style cleaning service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpCleanerConfig {
    pub base_url: String,
    pub model: String,
    /// Path of the prompt template; `{caption}` is replaced by the raw text.
    pub prompt_template_path: Option<String>,
    /// Environment variable holding the bearer token.
    pub token_env: String,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
}

impl Default for HttpCleanerConfig {
    fn default() -> Self {
        Self {
            base_url: String::new(),
            model: String::new(),
            prompt_template_path: None,
            token_env: "CLEANER_API_TOKEN".into(),
            timeout_secs: 60,
            max_in_flight: 4,
            retry: RetryPolicy::default(),
        }
    }
}

pub struct HttpCleaner {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    template: String,
    token: Option<String>,
}

impl HttpCleaner {
    pub fn new(cfg: &HttpCleanerConfig, template: String) -> Result<Self> {
        if cfg.base_url.is_empty() {
            return Err(Error::Config("cleaner base_url is not set".into()));
        }
        if !template.contains("{caption}") {
            return Err(Error::Config("prompt template must contain {caption}".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(Self {
            client,
            endpoint: format!("{}/chat/completions", cfg.base_url.trim_end_matches('/')),
            model: cfg.model.clone(),
            template,
            token: std::env::var(&cfg.token_env).ok().filter(|t| !t.is_empty()),
        })
    }

    pub fn from_config(cfg: &HttpCleanerConfig) -> Result<Self> {
        let path = cfg
            .prompt_template_path
            .as_deref()
            .ok_or_else(|| Error::Config("cleaner prompt_template_path is not set".into()))?;
        let template = std::fs::read_to_string(path).map_err(|e| Error::io(path.as_ref(), e))?;
        Self::new(cfg, template)
    }
}

impl CaptionCleaner for HttpCleaner {
    fn clean(&self, raw: &str) -> std::result::Result<String, CleanError> {
        let body = serde_json::json!({
            "model": self.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": self.template.replace("{caption}", raw)}],
        });
        let mut req = self.client.post(&self.endpoint).json(&body);
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| CleanError::Transport {
            message: e.to_string(),
            retriable: true,
        })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(CleanError::Transport {
                message: format!("HTTP {status}"),
                retriable: status.is_server_error() || status.as_u16() == 429,
            });
        }
        let value: serde_json::Value = resp.json().map_err(|e| CleanError::Response(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| CleanError::Response("missing choices[0].message.content".into()))
    }
}
