use thiserror::Error;

/// Structural problems with key, signature or identifier bytes.
///
/// A signature that simply fails to verify is not a `CodecError`; that is
/// reported as a `false` verification outcome.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("public key of {0} bytes matches no supported algorithm")]
    PublicKeyLength(usize),
    #[error("{algorithm} public key must be {expected} bytes, got {actual}")]
    KeyLengthMismatch { algorithm: &'static str, expected: usize, actual: usize },
    #[error("malformed private key: {0}")]
    PrivateKey(String),
    #[error("unknown signature algorithm {0:?}")]
    UnknownAlgorithm(String),
    #[error("invalid server id {0:?}: expected 1-64 characters from [A-Za-z0-9._-]")]
    ServerId(String),
    #[error("malformed base64url: {0}")]
    Base64(String),
}

/// Reasons a header value is rejected by [`decode_token`](crate::decode_token).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("empty header value")]
    Empty,
    #[error("missing attestation count")]
    MissingCount,
    #[error("attestation count {0:?} is not a canonical decimal integer")]
    InvalidCount(String),
    #[error("declared {declared} attestations but found {found}")]
    CountMismatch { declared: usize, found: usize },
    #[error("malformed base64url in {field}")]
    Base64 { field: String },
    #[error("subject public key: {0}")]
    PublicKey(CodecError),
    #[error("attestation {0:?} is not of the form issuer=signature")]
    MalformedAttestation(String),
    #[error("invalid issuer id {0:?}")]
    InvalidIssuer(String),
    #[error("duplicate issuer {0:?}")]
    DuplicateIssuer(String),
    #[error("{field} is {len} bytes, limit is {max}")]
    OversizedField { field: String, len: usize, max: usize },
    #[error("{count} attestations exceeds the limit of {max}")]
    TooManyAttestations { count: usize, max: usize },
}

impl ParseError {
    /// Short stable identifier, suitable for logs and deny bodies.
    pub fn kind(&self) -> &'static str {
        match self {
            ParseError::Empty => "empty",
            ParseError::MissingCount => "missing-count",
            ParseError::InvalidCount(_) => "invalid-count",
            ParseError::CountMismatch { .. } => "count-mismatch",
            ParseError::Base64 { .. } => "malformed-base64url",
            ParseError::PublicKey(_) => "bad-public-key",
            ParseError::MalformedAttestation(_) => "malformed-attestation",
            ParseError::InvalidIssuer(_) => "invalid-issuer",
            ParseError::DuplicateIssuer(_) => "duplicate-issuer",
            ParseError::OversizedField { .. } => "oversized-field",
            ParseError::TooManyAttestations { .. } => "too-many-attestations",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TokenError {
    #[error("token holds {count} attestations, limit is {max}")]
    TooManyAttestations { count: usize, max: usize },
    #[error("duplicate issuer {0}")]
    DuplicateIssuer(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
}
