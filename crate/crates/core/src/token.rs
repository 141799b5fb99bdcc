use std::collections::HashSet;

use crate::algorithm::SigAlgorithm;
use crate::attestation::Attestation;
use crate::b64url;
use crate::error::{CodecError, ParseError, TokenError};
use crate::server_id::ServerId;

/// Default cap on attestations carried by one token.
pub const DEFAULT_MAX_ATTESTATIONS: usize = 100;

/// Largest signature any supported scheme produces.
pub const MAX_SIGNATURE_LEN: usize = 256;

/// Base64url length of the largest binary field (256 bytes, unpadded).
const MAX_B64_FIELD_LEN: usize = (MAX_SIGNATURE_LEN * 4).div_ceil(3);

/// A user's public key together with the attestations it has collected.
///
/// Holds at most one attestation per issuer; order is the order in which
/// issuers were first merged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrustToken {
    subject_public_key: Vec<u8>,
    attestations: Vec<Attestation>,
}

impl TrustToken {
    /// A cold-start token with no attestations.
    pub fn new(subject_public_key: Vec<u8>) -> Result<Self, CodecError> {
        SigAlgorithm::from_public_key_len(subject_public_key.len())?;
        Ok(TrustToken { subject_public_key, attestations: Vec::new() })
    }

    /// Builds a token from parts, enforcing the one-per-issuer and size rules.
    pub fn from_parts(subject_public_key: Vec<u8>, attestations: Vec<Attestation>, max: usize) -> Result<Self, TokenError> {
        let mut token = TrustToken::new(subject_public_key)?;
        if attestations.len() > max {
            return Err(TokenError::TooManyAttestations { count: attestations.len(), max });
        }
        let mut seen = HashSet::new();
        for att in &attestations {
            if !seen.insert(att.issuer.clone()) {
                return Err(TokenError::DuplicateIssuer(att.issuer.to_string()));
            }
        }
        token.attestations = attestations;
        Ok(token)
    }

    pub fn subject_public_key(&self) -> &[u8] {
        &self.subject_public_key
    }

    /// Algorithm of the subject key, recovered from its length.
    pub fn subject_algorithm(&self) -> SigAlgorithm {
        SigAlgorithm::from_public_key_len(self.subject_public_key.len()).expect("validated on construction")
    }

    pub fn attestations(&self) -> &[Attestation] {
        &self.attestations
    }

    pub fn len(&self) -> usize {
        self.attestations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attestations.is_empty()
    }

    pub fn attestation_from(&self, issuer: &ServerId) -> Option<&Attestation> {
        self.attestations.iter().find(|a| &a.issuer == issuer)
    }

    /// Drops every attestation for which `keep` returns false.
    pub fn retain(&mut self, keep: impl FnMut(&Attestation) -> bool) {
        self.attestations.retain(keep);
    }

    /// Mutable access for fault injection. Bypasses no invariant: issuers and
    /// count cannot be changed through a signature slice.
    pub fn signature_mut(&mut self, index: usize) -> Option<&mut Vec<u8>> {
        self.attestations.get_mut(index).map(|a| &mut a.signature)
    }

    /// Replaces the subject key bytes in place; the length must be unchanged.
    pub fn subject_public_key_mut(&mut self) -> &mut [u8] {
        &mut self.subject_public_key
    }
}

/// Adds `att`, replacing any earlier attestation from the same issuer in
/// place. Uses [`DEFAULT_MAX_ATTESTATIONS`].
pub fn merge_attestation(token: TrustToken, att: Attestation) -> Result<TrustToken, TokenError> {
    merge_attestation_with_limit(token, att, DEFAULT_MAX_ATTESTATIONS)
}

pub fn merge_attestation_with_limit(mut token: TrustToken, att: Attestation, max: usize) -> Result<TrustToken, TokenError> {
    if let Some(slot) = token.attestations.iter_mut().find(|a| a.issuer == att.issuer) {
        *slot = att;
        return Ok(token);
    }
    if token.attestations.len() + 1 > max {
        return Err(TokenError::TooManyAttestations { count: token.attestations.len() + 1, max });
    }
    token.attestations.push(att);
    Ok(token)
}

/// Raw payload size in bytes: public key plus `n_attestations` signatures,
/// before any text encoding.
pub fn token_wire_size(algorithm: SigAlgorithm, n_attestations: usize) -> usize {
    algorithm.public_key_len() + n_attestations * algorithm.signature_len()
}

/// Renders the `User-Key-Signatures` header value:
/// `b64url(pk) ":" count *( ":" issuer "=" b64url(sig) )`.
pub fn encode_token(token: &TrustToken) -> Result<String, TokenError> {
    encode_token_with_limit(token, DEFAULT_MAX_ATTESTATIONS)
}

pub fn encode_token_with_limit(token: &TrustToken, max: usize) -> Result<String, TokenError> {
    let count = token.attestations.len();
    if count > max {
        return Err(TokenError::TooManyAttestations { count, max });
    }
    let mut out = b64url::encode(&token.subject_public_key);
    out.push(':');
    out.push_str(&count.to_string());
    for att in &token.attestations {
        out.push(':');
        out.push_str(att.issuer.as_str());
        out.push('=');
        out.push_str(&b64url::encode(&att.signature));
    }
    Ok(out)
}

pub fn decode_token(header_value: &str) -> Result<TrustToken, ParseError> {
    decode_token_with_limit(header_value, DEFAULT_MAX_ATTESTATIONS)
}

pub fn decode_token_with_limit(header_value: &str, max: usize) -> Result<TrustToken, ParseError> {
    if header_value.is_empty() {
        return Err(ParseError::Empty);
    }
    let mut fields = header_value.split(':');
    let pk_text = fields.next().unwrap_or_default();
    let subject_public_key = decode_field(pk_text, "subject public key")?;
    SigAlgorithm::from_public_key_len(subject_public_key.len()).map_err(ParseError::PublicKey)?;

    let count_text = fields.next().ok_or(ParseError::MissingCount)?;
    let declared = parse_count(count_text)?;
    if declared > max {
        return Err(ParseError::TooManyAttestations { count: declared, max });
    }

    let mut attestations = Vec::with_capacity(declared);
    let mut seen = HashSet::with_capacity(declared);
    let mut found = 0usize;
    for field in fields {
        found += 1;
        if found > declared {
            // keep counting so the mismatch error reports the true number,
            // but stop decoding past the cap
            if found > max {
                return Err(ParseError::TooManyAttestations { count: found, max });
            }
            continue;
        }
        let (issuer, sig_text) = field
            .split_once('=')
            .ok_or_else(|| ParseError::MalformedAttestation(truncate(field)))?;
        let issuer = ServerId::new(issuer).map_err(|_| ParseError::InvalidIssuer(truncate(issuer)))?;
        if !seen.insert(issuer.clone()) {
            return Err(ParseError::DuplicateIssuer(issuer.to_string()));
        }
        let signature = decode_field(sig_text, &format!("signature of {issuer}"))?;
        if signature.is_empty() {
            return Err(ParseError::MalformedAttestation(truncate(field)));
        }
        attestations.push(Attestation { issuer, signature });
    }
    if found != declared {
        return Err(ParseError::CountMismatch { declared, found });
    }
    Ok(TrustToken { subject_public_key, attestations })
}

fn decode_field(text: &str, field: &str) -> Result<Vec<u8>, ParseError> {
    if text.len() > MAX_B64_FIELD_LEN {
        return Err(ParseError::OversizedField { field: field.to_string(), len: text.len(), max: MAX_B64_FIELD_LEN });
    }
    b64url::decode(text).map_err(|_| ParseError::Base64 { field: field.to_string() })
}

fn parse_count(text: &str) -> Result<usize, ParseError> {
    let canonical = !text.is_empty()
        && text.bytes().all(|b| b.is_ascii_digit())
        && (text == "0" || !text.starts_with('0'))
        && text.len() <= 6;
    if !canonical {
        return Err(ParseError::InvalidCount(truncate(text)));
    }
    text.parse().map_err(|_| ParseError::InvalidCount(truncate(text)))
}

fn truncate(text: &str) -> String {
    text.chars().take(80).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sid(s: &str) -> ServerId {
        ServerId::new(s).unwrap()
    }

    fn att(issuer: &str, byte: u8) -> Attestation {
        Attestation { issuer: sid(issuer), signature: vec![byte; 64] }
    }

    #[test]
    fn empty_token_encoding() {
        let pk = vec![9u8; 32];
        let t = TrustToken::new(pk.clone()).unwrap();
        assert_eq!(encode_token(&t).unwrap(), format!("{}:0", b64url::encode(&pk)));
        assert_eq!(decode_token(&encode_token(&t).unwrap()).unwrap(), t);
    }

    #[test]
    fn single_attestation_encoding() {
        let pk = vec![1u8; 64];
        let t = merge_attestation(TrustToken::new(pk.clone()).unwrap(), att("s1", 2)).unwrap();
        let expected = format!("{}:1:s1={}", b64url::encode(&pk), b64url::encode(&[2u8; 64]));
        assert_eq!(encode_token(&t).unwrap(), expected);
        assert_eq!(decode_token(&expected).unwrap(), t);
    }

    #[test]
    fn merge_replaces_same_issuer_in_place() {
        let t = TrustToken::new(vec![0; 32]).unwrap();
        let t = merge_attestation(t, att("s1", 1)).unwrap();
        let t = merge_attestation(t, att("s2", 2)).unwrap();
        let t = merge_attestation(t, att("s1", 3)).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.attestations()[0], att("s1", 3));
        assert_eq!(t.attestations()[1].issuer, sid("s2"));
    }

    #[test]
    fn merge_respects_limit() {
        let t = TrustToken::new(vec![0; 32]).unwrap();
        let t = merge_attestation_with_limit(t, att("a", 1), 1).unwrap();
        // renewal at the limit still works
        let t = merge_attestation_with_limit(t, att("a", 2), 1).unwrap();
        assert!(matches!(
            merge_attestation_with_limit(t, att("b", 1), 1),
            Err(TokenError::TooManyAttestations { count: 2, max: 1 })
        ));
    }

    #[test]
    fn encode_rejects_oversized_token() {
        let atts = (0..3).map(|i| att(&format!("s{i}"), i)).collect();
        let t = TrustToken::from_parts(vec![0; 32], atts, 3).unwrap();
        assert!(encode_token_with_limit(&t, 2).is_err());
    }

    #[test]
    fn from_parts_rejects_duplicates() {
        let err = TrustToken::from_parts(vec![0; 32], vec![att("s1", 1), att("s1", 2)], 10).unwrap_err();
        assert_eq!(err, TokenError::DuplicateIssuer("s1".into()));
    }

    #[test]
    fn wire_size_formula() {
        assert_eq!(token_wire_size(SigAlgorithm::Rsa2048, 1), 512);
        assert_eq!(token_wire_size(SigAlgorithm::Ed25519, 0), 32);
        assert_eq!(token_wire_size(SigAlgorithm::EcP256, 100), 6464);
    }

    fn pk_b64() -> String {
        b64url::encode(&[5u8; 32])
    }

    #[test]
    fn decode_duplicate_issuer() {
        let sig = b64url::encode(&[1u8; 64]);
        let sig2 = b64url::encode(&[2u8; 64]);
        let text = format!("{}:2:s1={sig}:s1={sig2}", pk_b64());
        assert_eq!(decode_token(&text).unwrap_err(), ParseError::DuplicateIssuer("s1".into()));
    }

    #[test]
    fn decode_count_mismatch() {
        let sig = b64url::encode(&[1u8; 64]);
        let text = format!("{}:3:s1={sig}:s2={sig}", pk_b64());
        assert_eq!(decode_token(&text).unwrap_err(), ParseError::CountMismatch { declared: 3, found: 2 });
        let text = format!("{}:1:s1={sig}:s2={sig}", pk_b64());
        assert_eq!(decode_token(&text).unwrap_err(), ParseError::CountMismatch { declared: 1, found: 2 });
        let text = format!("{}:0:", pk_b64());
        assert_eq!(decode_token(&text).unwrap_err(), ParseError::CountMismatch { declared: 0, found: 1 });
    }

    #[test]
    fn decode_error_reasons() {
        let sig = b64url::encode(&[1u8; 64]);
        let pk = pk_b64();
        let cases: Vec<(String, &str)> = vec![
            (String::new(), "empty"),
            (pk.clone(), "missing-count"),
            (format!("{pk}:01"), "invalid-count"),
            (format!("{pk}:-1"), "invalid-count"),
            (format!("{pk}:x"), "invalid-count"),
            (format!("{pk}:"), "invalid-count"),
            (format!("{pk}+:0"), "malformed-base64url"),
            (format!("{pk}==:0"), "malformed-base64url"),
            (format!("{}:0", b64url::encode(&[0u8; 33])), "bad-public-key"),
            (format!("{pk}:1:s1{sig}"), "malformed-attestation"),
            (format!("{pk}:1:s1="), "malformed-attestation"),
            (format!("{pk}:1:s 1={sig}"), "invalid-issuer"),
            (format!("{pk}:1:s1=*{sig}"), "malformed-base64url"),
            (format!("{pk}:1:s1={}", "A".repeat(400)), "oversized-field"),
            (format!("{}:0", "A".repeat(400)), "oversized-field"),
            (format!("{pk}:101"), "too-many-attestations"),
        ];
        for (text, kind) in cases {
            let err = decode_token(&text).unwrap_err();
            assert_eq!(err.kind(), kind, "{text:?} gave {err}");
        }
    }

    #[test]
    fn decode_limits_found_count() {
        let sig = b64url::encode(&[1u8; 64]);
        let extra: String = (0..5).map(|i| format!(":s{i}={sig}")).collect();
        let text = format!("{}:1{extra}", pk_b64());
        assert_eq!(decode_token_with_limit(&text, 3).unwrap_err().kind(), "too-many-attestations");
    }

    #[test]
    fn decode_accepts_rsa_sized_signatures() {
        let sig = b64url::encode(&[1u8; 256]);
        let text = format!("{}:1:s1={sig}", b64url::encode(&[3u8; 256]));
        assert_eq!(decode_token(&text).unwrap().attestations()[0].signature.len(), 256);
    }
}
