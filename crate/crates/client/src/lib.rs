//! Thin async client for the feedback service.

use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use thiserror::Error;

use tegcer_core::api::{
    ErrorResponse, ExamplesResponse, FeedbackRequest, FeedbackResponse, HealthResponse,
};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("service returned {status}: {message}")]
    Status { status: StatusCode, message: String },
}

impl ClientError {
    pub fn status(&self) -> Option<StatusCode> {
        match self {
            ClientError::Status { status, .. } => Some(*status),
            ClientError::Transport(e) => e.status(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Client {
    http: reqwest::Client,
    base: String,
}

impl Client {
    /// `base_url` such as `http://127.0.0.1:8080`.
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            http: reqwest::Client::new(),
            base: base_url.into().trim_end_matches('/').to_string(),
        }
    }

    pub async fn feedback(&self, source: &str, page_size: Option<usize>) -> Result<FeedbackResponse, ClientError> {
        let body = FeedbackRequest {
            source: source.to_string(),
            page_size,
        };
        let resp = self
            .http
            .post(format!("{}/api/feedback", self.base))
            .json(&body)
            .send()
            .await?;
        decode(resp).await
    }

    pub async fn examples(&self, line_token: &str, offset: usize) -> Result<ExamplesResponse, ClientError> {
        let resp = self
            .http
            .get(format!("{}/api/examples", self.base))
            .query(&[("line_token", line_token.to_string()), ("offset", offset.to_string())])
            .send()
            .await?;
        decode(resp).await
    }

    /// Health report. A model-less service answers 503 with a body, which
    /// is returned as `Ok` here.
    pub async fn health(&self) -> Result<(StatusCode, HealthResponse), ClientError> {
        let resp = self.http.get(format!("{}/api/health", self.base)).send().await?;
        let status = resp.status();
        Ok((status, resp.json().await?))
    }
}

async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T, ClientError> {
    let status = resp.status();
    if status.is_success() {
        return Ok(resp.json().await?);
    }
    let text = resp.text().await.unwrap_or_default();
    let message = serde_json::from_str::<ErrorResponse>(&text)
        .map(|e| e.error)
        .unwrap_or(text);
    Err(ClientError::Status { status, message })
}
