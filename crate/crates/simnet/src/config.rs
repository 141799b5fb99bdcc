use std::path::Path;

use serde::{Deserialize, Serialize};
use trustzero_core::SigAlgorithm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Behavior {
    Honest,
    /// Earns attestations honestly once, then flips a byte of every token it sends.
    Tamper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserGroup {
    pub count: usize,
    #[serde(default)]
    pub spawn_interval_seconds: f64,
    pub behavior: Behavior,
}

impl UserGroup {
    pub fn new(count: usize, spawn_interval_seconds: f64, behavior: Behavior) -> Self {
        UserGroup { count, spawn_interval_seconds, behavior }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_servers: usize,
    /// Server key algorithm.
    pub algorithm: SigAlgorithm,
    /// Key algorithm of simulated users; the server algorithm when unset.
    pub user_algorithm: Option<SigAlgorithm>,
    pub users: Vec<UserGroup>,
    /// Rounds per user in the tamper experiment (one round visits every
    /// server), requests per user in the latency comparison.
    pub requests_per_user: usize,
    pub seed: u64,
    pub moving_average_window: usize,
    /// Pause between requests of background users in the load ramp.
    pub think_time_ms: u64,
    /// Requests the instrumented user sends alone before the ramp starts.
    pub baseline_requests: usize,
    /// How long full load is held after the last user spawns.
    pub hold_seconds: f64,
    /// Upper bound on detected load phases.
    pub max_phases: usize,
    /// Largest attestation count in the size report.
    pub size_max_attestations: usize,
    /// Fraction of failed requests above which a run is flagged truncated.
    pub failure_budget: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_servers: 5,
            algorithm: SigAlgorithm::Rsa2048,
            user_algorithm: None,
            users: vec![UserGroup::new(1, 0.0, Behavior::Tamper), UserGroup::new(1, 0.0, Behavior::Honest)],
            requests_per_user: 50,
            seed: 1,
            moving_average_window: 100,
            think_time_ms: 1000,
            baseline_requests: 300,
            hold_seconds: 3.0,
            max_phases: 3,
            size_max_attestations: 100,
            failure_budget: 0.01,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading config: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl ExperimentConfig {
    /// Two users, sequential: one tampering, one honest.
    pub fn tamper() -> Self {
        Self::default()
    }

    pub fn latency() -> Self {
        ExperimentConfig { users: vec![], requests_per_user: 500, ..Self::default() }
    }

    pub fn ramp() -> Self {
        ExperimentConfig {
            user_algorithm: Some(SigAlgorithm::Ed25519),
            users: vec![UserGroup::new(200, 0.1, Behavior::Honest)],
            requests_per_user: 0,
            ..Self::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.n_servers == 0 {
            return bad("n_servers must be at least 1");
        }
        if self.moving_average_window == 0 {
            return bad("moving_average_window must be at least 1");
        }
        if self.max_phases == 0 {
            return bad("max_phases must be at least 1");
        }
        if self.size_max_attestations == 0 {
            return bad("size_max_attestations must be at least 1");
        }
        if !(self.hold_seconds >= 0.0 && self.hold_seconds.is_finite()) {
            return bad("hold_seconds must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.failure_budget) {
            return bad("failure_budget must be within [0, 1]");
        }
        for g in &self.users {
            if !(g.spawn_interval_seconds >= 0.0 && g.spawn_interval_seconds.is_finite()) {
                return bad("spawn_interval_seconds must be finite and non-negative");
            }
            if g.count > 2000 {
                return bad("at most 2000 users per group");
            }
        }
        Ok(())
    }

    pub fn user_key_algorithm(&self) -> SigAlgorithm {
        self.user_algorithm.unwrap_or(self.algorithm)
    }

    pub fn total_users(&self) -> usize {
        self.users.iter().map(|g| g.count).sum()
    }
}
