use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trustzero_core::{ServerId, SigAlgorithm};

use crate::policy::GatewayPolicy;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GatewayConfig {
    #[serde(default = "default_listen")]
    pub listen_addr: SocketAddr,
    /// `host:port` or an `http://` base URL of the origin.
    pub upstream_addr: String,
    pub server_id: ServerId,
    #[serde(default = "default_algorithm")]
    pub algorithm: SigAlgorithm,
    /// Server key file; created on first start. Without it the key lives
    /// only as long as the process.
    #[serde(default)]
    pub key_path: Option<PathBuf>,
    /// Pinned directory of peer gateways (JSON). The gateway's own entry is
    /// always added from its current key.
    #[serde(default)]
    pub directory_path: Option<PathBuf>,
    #[serde(default)]
    pub score_table_path: Option<PathBuf>,
    #[serde(default)]
    pub decision_log_path: Option<PathBuf>,
    /// Number of recent decisions kept in memory.
    #[serde(default)]
    pub decision_buffer: usize,
    #[serde(default = "default_upstream_timeout_ms")]
    pub upstream_timeout_ms: u64,
    #[serde(default)]
    pub policy: GatewayPolicy,
}

fn default_listen() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], 0))
}

fn default_algorithm() -> SigAlgorithm {
    SigAlgorithm::Rsa2048
}

fn default_upstream_timeout_ms() -> u64 {
    10_000
}

impl GatewayConfig {
    pub fn new(server_id: ServerId, upstream_addr: impl Into<String>, algorithm: SigAlgorithm) -> Self {
        GatewayConfig {
            listen_addr: default_listen(),
            upstream_addr: upstream_addr.into(),
            server_id,
            algorithm,
            key_path: None,
            directory_path: None,
            score_table_path: None,
            decision_log_path: None,
            decision_buffer: 0,
            upstream_timeout_ms: default_upstream_timeout_ms(),
            policy: GatewayPolicy::default(),
        }
    }

    pub fn from_toml_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(toml::from_str(&text)?)
    }

    pub fn upstream_base_url(&self) -> String {
        let addr = self.upstream_addr.trim_end_matches('/');
        if addr.starts_with("http://") || addr.starts_with("https://") {
            addr.to_string()
        } else {
            format!("http://{addr}")
        }
    }
}
