use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use axum::body::{Body, Bytes};
use axum::http::{header, HeaderMap, HeaderName, HeaderValue, Method, Request, Response, StatusCode};
use parking_lot::RwLock;
use serde_json::json;
use trustzero_core::{
    b64url, decode_token_with_limit, encode_grant, keygen, sign_attestation, trust_score, verify_signature, KeyMaterial,
    PublishedKey, ServerId, SigAlgorithm, TrustDirectory, TrustToken, GRANT_HEADER, POP_HEADER, TOKEN_HEADER,
};

use crate::config::GatewayConfig;
use crate::decision::{DecisionLog, DecisionRecord};
use crate::key_store::{self, KeyFileError};
use crate::policy::{DenyRule, GatewayPolicy, Outcome, PolicyError};
use crate::score_table::ScoreTable;

/// Response header reporting the verified score of a forwarded request.
pub const SCORE_HEADER: &str = "User-Key-Score";

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Key(#[from] KeyFileError),
    #[error("directory {path}: {source}")]
    Directory { path: PathBuf, source: anyhow::Error },
    #[error("score table {path}: {source}")]
    ScoreTable { path: PathBuf, source: std::io::Error },
    #[error("decision log: {0}")]
    DecisionLog(std::io::Error),
    #[error("upstream client: {0}")]
    Client(#[from] reqwest::Error),
}

/// The signing key and the directory it is verified against. Swapped as a
/// unit so no request sees a rotated key with a stale directory.
struct KeyState {
    key: Arc<KeyMaterial>,
    directory: Arc<TrustDirectory>,
}

/// Policy enforcement point in front of one origin.
pub struct Gateway {
    server_id: ServerId,
    algorithm: SigAlgorithm,
    policy: GatewayPolicy,
    state: RwLock<Arc<KeyState>>,
    key_path: Option<PathBuf>,
    table: ScoreTable,
    log: DecisionLog,
    upstream: reqwest::Client,
    upstream_base: String,
}

const HOP_BY_HOP: [&str; 9] = [
    "connection",
    "keep-alive",
    "proxy-authenticate",
    "proxy-authorization",
    "te",
    "trailer",
    "transfer-encoding",
    "upgrade",
    "host",
];

fn now_micros() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_micros() as u64).unwrap_or(0)
}

fn micros(d: Duration) -> u64 {
    d.as_micros().try_into().unwrap_or(u64::MAX)
}

impl Gateway {
    /// Builds a gateway from config, loading or creating its key.
    pub fn new(config: &GatewayConfig) -> Result<Self, GatewayError> {
        let key = match &config.key_path {
            Some(path) => match key_store::load_key(path, &config.server_id, config.algorithm)? {
                Some(k) => k,
                None => {
                    let k = keygen(config.algorithm, &mut rand_core::OsRng);
                    key_store::save_key(path, &config.server_id, &k)?;
                    k
                }
            },
            None => keygen(config.algorithm, &mut rand_core::OsRng),
        };
        Self::with_key(config, key)
    }

    /// Builds a gateway around an existing key; `config.key_path` is only
    /// used for saving future rotations.
    pub fn with_key(config: &GatewayConfig, key: KeyMaterial) -> Result<Self, GatewayError> {
        config.policy.validate()?;
        let directory = match &config.directory_path {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| GatewayError::Directory { path: path.clone(), source: e.into() })?;
                TrustDirectory::from_json(&text).map_err(|e| GatewayError::Directory { path: path.clone(), source: e.into() })?
            }
            None => TrustDirectory::new(),
        };
        let table = match &config.score_table_path {
            Some(path) => ScoreTable::open(path).map_err(|source| GatewayError::ScoreTable { path: path.clone(), source })?,
            None => ScoreTable::in_memory(),
        };
        let log = DecisionLog::new(config.decision_log_path.as_deref(), config.decision_buffer)
            .map_err(GatewayError::DecisionLog)?;
        let upstream = reqwest::Client::builder()
            .timeout(Duration::from_millis(config.upstream_timeout_ms))
            .pool_max_idle_per_host(256)
            .build()?;
        let key = Arc::new(key);
        let directory = Arc::new(with_own_entry(directory, &config.server_id, &key));
        Ok(Gateway {
            server_id: config.server_id.clone(),
            algorithm: config.algorithm,
            policy: config.policy.clone(),
            state: RwLock::new(Arc::new(KeyState { key, directory })),
            key_path: config.key_path.clone(),
            table,
            log,
            upstream,
            upstream_base: config.upstream_base_url(),
        })
    }

    pub fn server_id(&self) -> &ServerId {
        &self.server_id
    }

    pub fn policy(&self) -> &GatewayPolicy {
        &self.policy
    }

    pub fn score_table(&self) -> &ScoreTable {
        &self.table
    }

    pub fn decisions(&self) -> &DecisionLog {
        &self.log
    }

    pub fn current_key(&self) -> Arc<KeyMaterial> {
        self.state.read().key.clone()
    }

    pub fn directory(&self) -> Arc<TrustDirectory> {
        self.state.read().directory.clone()
    }

    /// The key-publication record served at `/.trustzero/pubkey`.
    pub fn export_directory_entry(&self) -> PublishedKey {
        let key = self.current_key();
        PublishedKey::new(self.server_id.clone(), key.algorithm(), key.public_key())
    }

    /// Replaces the verification directory. The gateway's own entry always
    /// reflects its current key, whatever `directory` says about it.
    pub fn set_directory(&self, directory: TrustDirectory) {
        let mut state = self.state.write();
        let key = state.key.clone();
        *state = Arc::new(KeyState { directory: Arc::new(with_own_entry(directory, &self.server_id, &key)), key });
    }

    /// Generates and installs a new key, invalidating every attestation this
    /// gateway issued before.
    pub fn rotate_server_key(&self) -> Result<Arc<KeyMaterial>, KeyFileError> {
        self.install_key(keygen(self.algorithm, &mut rand_core::OsRng))
    }

    pub fn install_key(&self, key: KeyMaterial) -> Result<Arc<KeyMaterial>, KeyFileError> {
        if let Some(path) = &self.key_path {
            key_store::save_key(path, &self.server_id, &key)?;
        }
        let key = Arc::new(key);
        let mut state = self.state.write();
        let directory = (*state.directory).clone();
        *state = Arc::new(KeyState { directory: Arc::new(with_own_entry(directory, &self.server_id, &key)), key: key.clone() });
        tracing::info!(server_id = %self.server_id, "server key rotated");
        Ok(key)
    }

    /// Applies the trust policy to one request, forwarding it upstream when
    /// allowed. Exactly one decision record is produced and logged.
    pub async fn handle_request(&self, req: Request<Bytes>) -> (Response<Body>, DecisionRecord) {
        let started = Instant::now();
        let state = self.state.read().clone();
        let (parts, body) = req.into_parts();
        let path = parts.uri.path_and_query().map(|p| p.as_str().to_string()).unwrap_or_else(|| "/".into());
        let mut record = DecisionRecord {
            timestamp_micros: now_micros(),
            server_id: self.server_id.to_string(),
            method: parts.method.to_string(),
            path: path.clone(),
            subject_pk: None,
            outcome: Outcome::Forwarded,
            reason: None,
            attestations: 0,
            score: 0,
            verify_micros: 0,
            processing_micros: 0,
            upstream_status: None,
            granted: false,
        };

        let token = match self.check_token(&parts.headers, &parts.method, &path, &body, &state, &mut record) {
            Ok(token) => token,
            Err(response) => {
                record.processing_micros = micros(started.elapsed());
                self.log.push(record.clone());
                return (response, record);
            }
        };

        let mut response = match self.forward(&parts.method, &path, &parts.headers, body).await {
            Ok(r) => r,
            Err(e) => {
                tracing::warn!(server_id = %self.server_id, error = %e, "upstream unreachable");
                record.outcome = Outcome::UpstreamError;
                record.reason = Some("upstream-unreachable".into());
                record.processing_micros = micros(started.elapsed());
                self.log.push(record.clone());
                let body = json!({ "rule": "upstream", "reason": e.to_string() });
                return (json_response(StatusCode::BAD_GATEWAY, &body), record);
            }
        };
        let status = response.status().as_u16();
        record.upstream_status = Some(status);

        if let Some(token) = &token {
            set_header(response.headers_mut(), SCORE_HEADER, &record.score.to_string());
            if self.policy.issue_on_status.contains(&status) {
                match sign_attestation(&state.key, &self.server_id, token.subject_public_key()) {
                    Ok(att) => {
                        set_header(response.headers_mut(), GRANT_HEADER, &encode_grant(&att));
                        record.granted = true;
                    }
                    Err(e) => tracing::warn!(server_id = %self.server_id, error = %e, "could not issue grant"),
                }
            }
        } else if self.policy.issue_on_status.contains(&status) {
            tracing::warn!(server_id = %self.server_id, "successful response without trust token; no grant issued");
        }
        let verify_ms = record.verify_micros as f64 / 1000.0;
        set_header(response.headers_mut(), "Server-Timing", &format!("verify;dur={verify_ms:.3}"));

        record.processing_micros = micros(started.elapsed());
        self.log.push(record.clone());
        (response, record)
    }

    /// Header, token, proof-of-possession and score checks. `Ok(None)` means
    /// the header was absent and the policy lets such requests through.
    #[allow(clippy::result_large_err)]
    fn check_token(
        &self,
        headers: &HeaderMap,
        method: &Method,
        path: &str,
        body: &Bytes,
        state: &KeyState,
        record: &mut DecisionRecord,
    ) -> Result<Option<TrustToken>, Response<Body>> {
        let mut values = headers.get_all(TOKEN_HEADER).iter();
        let Some(value) = values.next() else {
            if self.policy.require_header {
                return Err(self.deny(record, DenyRule::MissingHeader, "Missing User-Key-Signatures header", None));
            }
            return Ok(None);
        };
        if values.next().is_some() {
            return Err(self.deny_parse(record, "repeated-header", "User-Key-Signatures sent more than once"));
        }
        let Ok(text) = value.to_str() else {
            return Err(self.deny_parse(record, "non-ascii", "header value is not ASCII"));
        };
        let token = match decode_token_with_limit(text.trim(), self.policy.max_attestations) {
            Ok(t) => t,
            Err(e) => return Err(self.deny_parse(record, e.kind(), &e.to_string())),
        };
        record.subject_pk = Some(b64url::encode(token.subject_public_key()));
        record.attestations = token.len();

        let verify_started = Instant::now();
        if self.policy.require_pop {
            let valid = headers
                .get(POP_HEADER)
                .and_then(|v| v.to_str().ok())
                .and_then(|v| b64url::decode(v).ok())
                .map(|sig| {
                    let msg = trustzero_core::pop_message(method.as_str(), path, body);
                    verify_signature(token.subject_algorithm(), token.subject_public_key(), &msg, &sig).unwrap_or(false)
                })
                .unwrap_or(false);
            if !valid {
                record.verify_micros = micros(verify_started.elapsed());
                return Err(self.deny(record, DenyRule::InvalidSignatures, "proof-of-possession missing or invalid", None));
            }
        }
        let report = trust_score(&token, &state.directory);
        record.verify_micros = micros(verify_started.elapsed());
        record.score = report.score;

        if let Err(e) = self.table.record(token.subject_public_key(), report.score, record.timestamp_micros) {
            tracing::error!(server_id = %self.server_id, error = %e, "score table persistence failed");
        }

        if self.policy.strict_mode && report.any_invalid() {
            let bad: Vec<_> = report
                .per_issuer
                .iter()
                .filter(|(_, v)| *v == trustzero_core::IssuerVerdict::Invalid)
                .map(|(id, _)| id.as_str())
                .collect();
            let reason = format!("Error in signatures: {}", bad.join(","));
            return Err(self.deny(record, DenyRule::InvalidSignatures, &reason, Some(report.score)));
        }
        if report.score < self.policy.min_score_to_forward {
            let reason = format!("score {} below {}", report.score, self.policy.min_score_to_forward);
            return Err(self.deny(record, DenyRule::InsufficientScore, &reason, Some(report.score)));
        }
        Ok(Some(token))
    }

    fn deny(&self, record: &mut DecisionRecord, rule: DenyRule, reason: &str, score: Option<u32>) -> Response<Body> {
        record.outcome = rule.outcome();
        record.reason = Some(rule.as_str().to_string());
        let mut body = json!({ "rule": rule.as_str(), "reason": reason });
        if let Some(id) = rule.rule_id() {
            body["rule_id"] = id.into();
        }
        if let Some(score) = score {
            body["score"] = score.into();
        }
        json_response(StatusCode::FORBIDDEN, &body)
    }

    fn deny_parse(&self, record: &mut DecisionRecord, kind: &str, detail: &str) -> Response<Body> {
        record.outcome = Outcome::DenyParseError;
        record.reason = Some(kind.to_string());
        let rule = DenyRule::InvalidSignatures;
        let body = json!({
            "rule": rule.as_str(),
            "rule_id": rule.rule_id(),
            "reason": format!("Error in signatures: {detail}"),
            "parse_error": kind,
        });
        json_response(StatusCode::FORBIDDEN, &body)
    }

    async fn forward(&self, method: &Method, path: &str, headers: &HeaderMap, body: Bytes) -> Result<Response<Body>, reqwest::Error> {
        let url = format!("{}{}", self.upstream_base, path);
        let mut outbound = HeaderMap::with_capacity(headers.len());
        for (name, value) in headers {
            if !is_hop_by_hop(name) && name != header::CONTENT_LENGTH {
                outbound.append(name.clone(), value.clone());
            }
        }
        let upstream = self.upstream.request(method.clone(), url).headers(outbound).body(body).send().await?;
        let status = upstream.status();
        let upstream_headers = upstream.headers().clone();
        let bytes = upstream.bytes().await?;

        let mut response = Response::builder().status(status).body(Body::from(bytes)).expect("valid response");
        for (name, value) in &upstream_headers {
            if !is_hop_by_hop(name) && name != header::CONTENT_LENGTH {
                response.headers_mut().append(name.clone(), value.clone());
            }
        }
        Ok(response)
    }
}

fn with_own_entry(mut directory: TrustDirectory, id: &ServerId, key: &KeyMaterial) -> TrustDirectory {
    directory
        .insert(id.clone(), key.algorithm(), key.public_key().to_vec())
        .expect("own key has canonical length");
    directory
}

fn is_hop_by_hop(name: &HeaderName) -> bool {
    HOP_BY_HOP.contains(&name.as_str())
}

fn set_header(headers: &mut HeaderMap, name: &'static str, value: &str) {
    if let Ok(v) = HeaderValue::from_str(value) {
        headers.insert(name, v);
    }
}

fn json_response(status: StatusCode, body: &serde_json::Value) -> Response<Body> {
    Response::builder()
        .status(status)
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body.to_string()))
        .expect("valid response")
}
