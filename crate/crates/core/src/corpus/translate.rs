use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::CleanEmail;
use crate::retry::{with_retries, Retryable, RetryPolicy};

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "kind", content = "message", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MtError {
    /// Transient: endpoint down, overloaded or timed out.
    #[error("translation endpoint unavailable: {0}")]
    MtUnavailable(String),
    /// Permanent: the endpoint refused this text.
    #[error("translation rejected: {0}")]
    MtRejected(String),
}

impl Retryable for MtError {
    fn is_retryable(&self) -> bool {
        matches!(self, MtError::MtUnavailable(_))
    }
}

#[async_trait]
pub trait MtClient: Send + Sync {
    async fn translate(&self, text: &str, source: &str, target: &str) -> Result<String, MtError>;
}

#[derive(Serialize)]
struct MtRequest<'a> {
    text: &'a str,
    source: &'a str,
    target: &'a str,
}

#[derive(Deserialize)]
struct MtResponse {
    text: String,
}

/// JSON-over-HTTP translation client: POST `{"text","source","target"}` → `{"text"}`.
pub struct HttpMtClient {
    url: String,
    token: Option<String>,
    http: reqwest::Client,
}

impl HttpMtClient {
    pub fn new(url: impl Into<String>, token: Option<String>, timeout: Duration) -> Self {
        let http = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .expect("http client builds");
        Self {
            url: url.into(),
            token,
            http,
        }
    }
}

#[async_trait]
impl MtClient for HttpMtClient {
    async fn translate(&self, text: &str, source: &str, target: &str) -> Result<String, MtError> {
        let mut req = self.http.post(&self.url).json(&MtRequest {
            text,
            source,
            target,
        });
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let resp = req
            .send()
            .await
            .map_err(|e| MtError::MtUnavailable(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(MtError::MtUnavailable(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let body = resp.text().await.unwrap_or_default();
            return Err(MtError::MtRejected(format!("HTTP {status}: {body}")));
        }
        let parsed: MtResponse = resp
            .json()
            .await
            .map_err(|e| MtError::MtRejected(format!("malformed response: {e}")))?;
        Ok(parsed.text)
    }
}

/// Deterministic stand-in: canned translations by exact source text, echo otherwise.
#[derive(Debug, Clone, Default)]
pub struct MockMtClient {
    pub canned: HashMap<String, String>,
    /// Texts the mock refuses with `MtRejected`.
    pub reject: Vec<String>,
}

impl MockMtClient {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        Ok(Self {
            canned: serde_json::from_str(text)?,
            reject: Vec::new(),
        })
    }
}

#[async_trait]
impl MtClient for MockMtClient {
    async fn translate(&self, text: &str, _source: &str, _target: &str) -> Result<String, MtError> {
        if self.reject.iter().any(|r| r == text) {
            return Err(MtError::MtRejected("mock rejection".into()));
        }
        Ok(self
            .canned
            .get(text)
            .cloned()
            .unwrap_or_else(|| text.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct TranslateOptions {
    pub target_lang: String,
    /// Leave bodies untouched and mark them untranslated.
    pub passthrough: bool,
    pub retry: RetryPolicy,
    pub concurrency: usize,
}

impl Default for TranslateOptions {
    fn default() -> Self {
        Self {
            target_lang: "en".into(),
            passthrough: false,
            retry: RetryPolicy::default(),
            concurrency: 4,
        }
    }
}

fn is_target_lang(lang: &str, target: &str) -> bool {
    lang.split(['-', '_'])
        .next()
        .is_some_and(|primary| primary.eq_ignore_ascii_case(target))
}

/// Translates the body (and subject) of one e-mail, retrying transient failures.
///
/// E-mails already in the target language, or any e-mail in pass-through
/// mode, are returned unchanged with `translated = false`.
pub async fn translate(
    email: &CleanEmail,
    mt: &dyn MtClient,
    opts: &TranslateOptions,
) -> Result<CleanEmail, MtError> {
    if opts.passthrough || is_target_lang(&email.source_lang, &opts.target_lang) {
        return Ok(email.clone());
    }
    let call = |text: String| {
        let source = email.source_lang.clone();
        async move {
            with_retries(&opts.retry, || mt.translate(&text, &source, &opts.target_lang))
                .await
                .map(|a| a.value)
                .map_err(|a| a.value)
        }
    };
    let body = call(email.body.clone()).await?;
    let subject = match &email.subject {
        Some(s) => Some(call(s.clone()).await?),
        None => None,
    };
    Ok(CleanEmail {
        body,
        subject,
        translated: true,
        ..email.clone()
    })
}

/// Translates with at most `opts.concurrency` requests in flight; output order equals input order.
pub async fn translate_all(
    emails: &[CleanEmail],
    mt: Arc<dyn MtClient>,
    opts: &TranslateOptions,
) -> Vec<Result<CleanEmail, MtError>> {
    stream::iter(emails)
        .map(|e| {
            let mt = Arc::clone(&mt);
            async move { translate(e, mt.as_ref(), opts).await }
        })
        .buffered(opts.concurrency.max(1))
        .collect()
        .await
}
