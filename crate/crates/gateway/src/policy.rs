use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use trustzero_core::DEFAULT_MAX_ATTESTATIONS;

/// What the gateway demands of a request before forwarding it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayPolicy {
    /// Deny requests without a `User-Key-Signatures` header.
    pub require_header: bool,
    /// Deny when any attestation from a known issuer fails verification.
    pub strict_mode: bool,
    pub min_score_to_forward: u32,
    /// Upstream statuses that earn the client a fresh attestation.
    pub issue_on_status: BTreeSet<u16>,
    /// Require a `User-Key-PoP` signature by the subject key.
    pub require_pop: bool,
    pub max_attestations: usize,
}

impl Default for GatewayPolicy {
    fn default() -> Self {
        GatewayPolicy {
            require_header: true,
            strict_mode: true,
            min_score_to_forward: 0,
            issue_on_status: BTreeSet::from([200]),
            require_pop: false,
            max_attestations: DEFAULT_MAX_ATTESTATIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("issue_on_status must not be empty")]
    NoIssueStatus,
    #[error("issue_on_status contains {0}, which is not an HTTP status code")]
    BadStatus(u16),
    #[error("max_attestations must be at least 1")]
    ZeroMaxAttestations,
}

impl GatewayPolicy {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.issue_on_status.is_empty() {
            return Err(PolicyError::NoIssueStatus);
        }
        if let Some(&bad) = self.issue_on_status.iter().find(|s| !(100..=599).contains(*s)) {
            return Err(PolicyError::BadStatus(bad));
        }
        if self.max_attestations == 0 {
            return Err(PolicyError::ZeroMaxAttestations);
        }
        Ok(())
    }
}

/// Named deny rules. The first two keep the rule ids of the original
/// ModSecurity deployment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DenyRule {
    MissingHeader,
    InvalidSignatures,
    InsufficientScore,
}

impl DenyRule {
    pub fn as_str(self) -> &'static str {
        match self {
            DenyRule::MissingHeader => "missing-header",
            DenyRule::InvalidSignatures => "invalid-signatures",
            DenyRule::InsufficientScore => "insufficient-score",
        }
    }

    pub fn rule_id(self) -> Option<u32> {
        match self {
            DenyRule::MissingHeader => Some(10009),
            DenyRule::InvalidSignatures => Some(10010),
            DenyRule::InsufficientScore => None,
        }
    }

    pub fn outcome(self) -> Outcome {
        match self {
            DenyRule::MissingHeader => Outcome::DenyMissingHeader,
            DenyRule::InvalidSignatures => Outcome::DenyInvalidSignature,
            DenyRule::InsufficientScore => Outcome::DenyBelowMinScore,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    DenyMissingHeader,
    DenyParseError,
    DenyInvalidSignature,
    DenyBelowMinScore,
    Forwarded,
    /// Policy passed but the origin could not be reached.
    UpstreamError,
}

impl Outcome {
    pub fn is_denial(self) -> bool {
        matches!(
            self,
            Outcome::DenyMissingHeader | Outcome::DenyParseError | Outcome::DenyInvalidSignature | Outcome::DenyBelowMinScore
        )
    }
}
