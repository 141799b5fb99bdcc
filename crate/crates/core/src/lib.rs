//! Trust tokens: portable bundles of server signatures over a user's public
//! key, and the score a verifier derives from them.
//!
//! Everything here is pure. Key generation takes its randomness from the
//! caller; all other operations are deterministic functions of their inputs.
//!
//! ```
//! use rand_core::OsRng;
//! use trustzero_core::*;
//!
//! let user = keygen(SigAlgorithm::Ed25519, &mut OsRng);
//! let server = keygen(SigAlgorithm::Ed25519, &mut OsRng);
//! let id = ServerId::new("s1").unwrap();
//!
//! let att = sign_attestation(&server, &id, user.public_key()).unwrap();
//! let token = merge_attestation(TrustToken::new(user.public_key().to_vec()).unwrap(), att).unwrap();
//!
//! let mut dir = TrustDirectory::new();
//! dir.insert(id, server.algorithm(), server.public_key().to_vec()).unwrap();
//!
//! let header = encode_token(&token).unwrap();
//! assert_eq!(trust_score(&decode_token(&header).unwrap(), &dir).score, 1);
//! ```

pub mod algorithm;
pub mod attestation;
pub mod b64url;
pub mod directory;
pub mod error;
pub mod keys;
pub mod score;
pub mod server_id;
pub mod token;

pub use algorithm::SigAlgorithm;
pub use attestation::{sign_attestation, verify_attestation, Attestation};
pub use directory::{DirectoryEntry, DirectoryError, PublishedKey, TrustDirectory};
pub use error::{CodecError, ParseError, TokenError};
pub use keys::{keygen, verify_signature, KeyMaterial};
pub use score::{trust_score, IssuerVerdict, ScoreReport};
pub use server_id::ServerId;
pub use token::{
    decode_token, decode_token_with_limit, encode_token, encode_token_with_limit, merge_attestation,
    merge_attestation_with_limit, token_wire_size, TrustToken, DEFAULT_MAX_ATTESTATIONS,
};

/// Request header carrying the encoded trust token.
pub const TOKEN_HEADER: &str = "User-Key-Signatures";
/// Response header carrying a freshly issued attestation.
pub const GRANT_HEADER: &str = "User-Key-Signature-Grant";
/// Optional request header with a proof-of-possession signature.
pub const POP_HEADER: &str = "User-Key-PoP";
/// Key-publication path served by every gateway.
pub const PUBKEY_PATH: &str = "/.trustzero/pubkey";

/// Renders a grant header value: `issuer=b64url(signature)`.
pub fn encode_grant(att: &Attestation) -> String {
    format!("{}={}", att.issuer, b64url::encode(&att.signature))
}

/// Parses a grant header value.
pub fn decode_grant(value: &str) -> Result<Attestation, ParseError> {
    let (issuer, sig) = value
        .split_once('=')
        .ok_or_else(|| ParseError::MalformedAttestation(value.chars().take(80).collect()))?;
    let issuer = ServerId::new(issuer).map_err(|_| ParseError::InvalidIssuer(issuer.chars().take(80).collect()))?;
    let signature = b64url::decode(sig).map_err(|_| ParseError::Base64 { field: "grant signature".into() })?;
    if signature.is_empty() || signature.len() > token::MAX_SIGNATURE_LEN {
        return Err(ParseError::MalformedAttestation(value.chars().take(80).collect()));
    }
    Ok(Attestation { issuer, signature })
}

/// Message signed for proof-of-possession: method, path and the SHA-256 of
/// the body, newline separated, under a fixed prefix.
pub fn pop_message(method: &str, path_and_query: &str, body: &[u8]) -> Vec<u8> {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(body);
    let mut msg = Vec::with_capacity(64 + path_and_query.len());
    msg.extend_from_slice(b"trustzero-pop\n");
    msg.extend_from_slice(method.as_bytes());
    msg.push(b'\n');
    msg.extend_from_slice(path_and_query.as_bytes());
    msg.push(b'\n');
    msg.extend_from_slice(b64url::encode(&digest).as_bytes());
    msg
}
