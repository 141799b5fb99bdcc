use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::CodecError;

/// Signature scheme used by a user or server identity.
///
/// Every scheme has a fixed public-key and signature length, and the three
/// public-key lengths are pairwise distinct, so the algorithm of a bare
/// public key can always be recovered from its length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SigAlgorithm {
    /// RSA-2048, PKCS#1 v1.5 padding over SHA-256. Public key is the raw
    /// big-endian modulus (public exponent fixed at 65537).
    #[serde(rename = "RSA2048")]
    Rsa2048,
    /// ECDSA over NIST P-256 with SHA-256, RFC 6979 nonces. Public key is the
    /// uncompressed point without the SEC1 tag byte (`x || y`).
    #[serde(rename = "ECP256")]
    EcP256,
    /// Ed25519.
    #[serde(rename = "ED25519")]
    Ed25519,
}

impl SigAlgorithm {
    pub const ALL: [SigAlgorithm; 3] = [SigAlgorithm::Rsa2048, SigAlgorithm::EcP256, SigAlgorithm::Ed25519];

    pub const fn public_key_len(self) -> usize {
        match self {
            SigAlgorithm::Rsa2048 => 256,
            SigAlgorithm::EcP256 => 64,
            SigAlgorithm::Ed25519 => 32,
        }
    }

    pub const fn signature_len(self) -> usize {
        match self {
            SigAlgorithm::Rsa2048 => 256,
            SigAlgorithm::EcP256 | SigAlgorithm::Ed25519 => 64,
        }
    }

    /// Infers the scheme from the length of a canonical public key.
    pub fn from_public_key_len(len: usize) -> Result<SigAlgorithm, CodecError> {
        SigAlgorithm::ALL
            .into_iter()
            .find(|alg| alg.public_key_len() == len)
            .ok_or(CodecError::PublicKeyLength(len))
    }

    pub const fn as_str(self) -> &'static str {
        match self {
            SigAlgorithm::Rsa2048 => "RSA2048",
            SigAlgorithm::EcP256 => "ECP256",
            SigAlgorithm::Ed25519 => "ED25519",
        }
    }
}

impl fmt::Display for SigAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for SigAlgorithm {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().replace(['-', '_'], "").as_str() {
            "RSA2048" | "RSA" => Ok(SigAlgorithm::Rsa2048),
            "ECP256" | "P256" | "ECDSAP256" => Ok(SigAlgorithm::EcP256),
            "ED25519" | "EDDSA" => Ok(SigAlgorithm::Ed25519),
            _ => Err(CodecError::UnknownAlgorithm(s.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_lengths() {
        assert_eq!((SigAlgorithm::Rsa2048.public_key_len(), SigAlgorithm::Rsa2048.signature_len()), (256, 256));
        assert_eq!((SigAlgorithm::EcP256.public_key_len(), SigAlgorithm::EcP256.signature_len()), (64, 64));
        assert_eq!((SigAlgorithm::Ed25519.public_key_len(), SigAlgorithm::Ed25519.signature_len()), (32, 64));
    }

    #[test]
    fn length_inference_is_unambiguous() {
        for alg in SigAlgorithm::ALL {
            assert_eq!(SigAlgorithm::from_public_key_len(alg.public_key_len()).unwrap(), alg);
        }
        assert!(SigAlgorithm::from_public_key_len(33).is_err());
    }

    #[test]
    fn parse_names() {
        for alg in SigAlgorithm::ALL {
            assert_eq!(alg.as_str().parse::<SigAlgorithm>().unwrap(), alg);
        }
        assert_eq!("ed25519".parse::<SigAlgorithm>().unwrap(), SigAlgorithm::Ed25519);
        assert_eq!("ec-p256".parse::<SigAlgorithm>().unwrap(), SigAlgorithm::EcP256);
        assert!("dsa".parse::<SigAlgorithm>().is_err());
    }
}
