use std::time::{Duration, Instant};

use reqwest::{Method, StatusCode};
use serde::Serialize;
use trustzero_core::{b64url, decode_grant, pop_message, PublishedKey, ServerId, TrustDirectory, GRANT_HEADER, POP_HEADER, PUBKEY_PATH, TOKEN_HEADER};

use crate::tamper::{TamperError, TamperSpec};
use crate::wallet::{GrantError, Wallet};

const SCORE_HEADER: &str = "User-Key-Score";

#[derive(Debug, thiserror::Error)]
pub enum SendError {
    /// The request never produced an HTTP response.
    #[error("network failure: {0}")]
    Network(#[source] reqwest::Error),
    #[error(transparent)]
    Tamper(#[from] TamperError),
    #[error("bad url {0}")]
    Url(String),
}

#[derive(Debug, Clone, Default)]
pub struct SendOptions {
    pub tamper: Vec<TamperSpec>,
    /// Merge verified grants into the wallet. Off for a user that should
    /// stay at zero attestations.
    pub harvest: bool,
    /// On a grant from an issuer missing from the directory, fetch the
    /// target's published key and pin it (trust on first use).
    pub tofu: bool,
    pub proof_of_possession: bool,
}

impl SendOptions {
    pub fn honest() -> Self {
        SendOptions { harvest: true, ..Default::default() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SendOutcome {
    pub status: u16,
    pub latency_seconds: f64,
    /// A verified grant was merged into the wallet.
    pub granted: bool,
    /// A grant header was present but rejected.
    pub grant_rejected: Option<String>,
    /// `rule` from a gateway 403 body.
    pub deny_rule: Option<String>,
    pub deny_reason: Option<String>,
    /// `User-Key-Score` reported by the gateway.
    pub score: Option<u32>,
    /// Gateway verification time from `Server-Timing`, in milliseconds.
    pub verify_ms: Option<f64>,
    /// Issuer pinned by trust-on-first-use during this call.
    pub pinned: Option<ServerId>,
    pub attestations_sent: usize,
    pub body: String,
}

/// HTTP user agent that presents the wallet's token on every request.
#[derive(Clone)]
pub struct TrustClient {
    http: reqwest::Client,
}

impl Default for TrustClient {
    fn default() -> Self {
        Self::new()
    }
}

impl TrustClient {
    pub fn new() -> Self {
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .expect("client builds");
        TrustClient { http }
    }

    pub fn with_http(http: reqwest::Client) -> Self {
        TrustClient { http }
    }

    /// Fetches the key a gateway publishes at its key endpoint.
    pub async fn fetch_published_key(&self, base_url: &str) -> Result<PublishedKey, SendError> {
        let url = format!("{}{}", origin_of(base_url)?, PUBKEY_PATH);
        let resp = self.http.get(url).send().await.map_err(SendError::Network)?;
        resp.error_for_status().map_err(SendError::Network)?.json().await.map_err(SendError::Network)
    }

    /// Sends one request carrying the wallet's token, then verifies and
    /// merges any grant in the response. The wallet is not saved here.
    pub async fn send(
        &self,
        wallet: &mut Wallet,
        directory: &mut TrustDirectory,
        method: Method,
        url: &str,
        body: Option<Vec<u8>>,
        opts: &SendOptions,
    ) -> Result<SendOutcome, SendError> {
        let mut token = wallet.token().clone();
        for spec in &opts.tamper {
            spec.apply(&mut token)?;
        }
        let header = trustzero_core::encode_token(&token).expect("wallet token stays within limits");
        let body = body.unwrap_or_default();

        let mut req = self.http.request(method.clone(), url).header(TOKEN_HEADER, header);
        if opts.proof_of_possession {
            let parsed = reqwest::Url::parse(url).map_err(|_| SendError::Url(url.to_string()))?;
            let path = match parsed.query() {
                Some(q) => format!("{}?{}", parsed.path(), q),
                None => parsed.path().to_string(),
            };
            let sig = wallet.keys().sign(&pop_message(method.as_str(), &path, &body));
            req = req.header(POP_HEADER, b64url::encode(&sig));
        }
        if !body.is_empty() {
            req = req.header(reqwest::header::CONTENT_TYPE, "application/json").body(body);
        }

        let started = Instant::now();
        let resp = req.send().await.map_err(SendError::Network)?;
        let status = resp.status();
        let headers = resp.headers().clone();
        let text = resp.text().await.map_err(SendError::Network)?;
        let latency_seconds = started.elapsed().as_secs_f64();

        let mut outcome = SendOutcome {
            status: status.as_u16(),
            latency_seconds,
            granted: false,
            grant_rejected: None,
            deny_rule: None,
            deny_reason: None,
            score: headers.get(SCORE_HEADER).and_then(|v| v.to_str().ok()).and_then(|v| v.parse().ok()),
            verify_ms: headers.get("server-timing").and_then(|v| v.to_str().ok()).and_then(parse_verify_ms),
            pinned: None,
            attestations_sent: token.len(),
            body: String::new(),
        };
        if status == StatusCode::FORBIDDEN || status == StatusCode::BAD_GATEWAY {
            if let Ok(v) = serde_json::from_str::<serde_json::Value>(&text) {
                outcome.deny_rule = v["rule"].as_str().map(str::to_string);
                outcome.deny_reason = v["reason"].as_str().map(str::to_string);
                if outcome.score.is_none() {
                    outcome.score = v["score"].as_u64().map(|s| s as u32);
                }
            }
        }
        outcome.body = text;

        if let Some(value) = headers.get(GRANT_HEADER) {
            if opts.harvest {
                self.harvest(wallet, directory, url, value.to_str().unwrap_or(""), opts, &mut outcome).await;
            }
        }
        Ok(outcome)
    }

    async fn harvest(
        &self,
        wallet: &mut Wallet,
        directory: &mut TrustDirectory,
        url: &str,
        value: &str,
        opts: &SendOptions,
        outcome: &mut SendOutcome,
    ) {
        let grant = match decode_grant(value) {
            Ok(g) => g,
            Err(e) => {
                tracing::warn!(error = %e, "malformed grant header");
                outcome.grant_rejected = Some(e.to_string());
                return;
            }
        };
        if directory.get(&grant.issuer).is_none() && opts.tofu {
            match self.fetch_published_key(url).await {
                Ok(key) if key.server_id == grant.issuer => match directory.insert_published(key) {
                    Ok(_) => outcome.pinned = Some(grant.issuer.clone()),
                    Err(e) => tracing::warn!(error = %e, "unusable published key"),
                },
                Ok(key) => tracing::warn!(published = %key.server_id, grant = %grant.issuer, "grant issuer differs from published key"),
                Err(e) => tracing::warn!(error = %e, "could not fetch published key"),
            }
        }
        match wallet.accept_grant(grant, directory) {
            Ok(()) => outcome.granted = true,
            Err(e) => {
                if matches!(e, GrantError::Forged(_)) {
                    tracing::warn!(error = %e, "rejected forged grant");
                }
                outcome.grant_rejected = Some(e.to_string());
            }
        }
    }
}

fn origin_of(url: &str) -> Result<String, SendError> {
    let parsed = reqwest::Url::parse(url).map_err(|_| SendError::Url(url.to_string()))?;
    let host = parsed.host_str().ok_or_else(|| SendError::Url(url.to_string()))?;
    Ok(match parsed.port() {
        Some(p) => format!("{}://{}:{}", parsed.scheme(), host, p),
        None => format!("{}://{}", parsed.scheme(), host),
    })
}

/// Extracts `dur` of the `verify` metric from a `Server-Timing` value.
pub fn parse_verify_ms(value: &str) -> Option<f64> {
    value.split(',').find_map(|metric| {
        let mut parts = metric.trim().split(';');
        if parts.next()? != "verify" {
            return None;
        }
        parts.find_map(|p| p.trim().strip_prefix("dur=")).and_then(|d| d.parse().ok())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn server_timing_parse() {
        assert_eq!(parse_verify_ms("verify;dur=0.125"), Some(0.125));
        assert_eq!(parse_verify_ms("db;dur=3, verify;desc=\"x\";dur=1.5"), Some(1.5));
        assert_eq!(parse_verify_ms("db;dur=3"), None);
    }

    #[test]
    fn origin_extraction() {
        assert_eq!(origin_of("http://127.0.0.1:8080/login?x=1").unwrap(), "http://127.0.0.1:8080");
        assert_eq!(origin_of("https://api.example.com/resource").unwrap(), "https://api.example.com");
        assert!(origin_of("not a url").is_err());
    }
}
