//! Byte-flip fault injection on an outgoing token, emulating an attacker who
//! alters signatures in transit.

use std::fmt;
use std::str::FromStr;

use trustzero_core::TrustToken;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TamperField {
    /// The subject public key.
    PublicKey,
    /// Signature of the attestation at this position.
    Signature(usize),
}

/// `field:byteindex`, where field is `pk`, `sig` (first attestation) or
/// `sigN` (attestation N, zero-based). The byte is XORed with 0xff.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TamperSpec {
    pub field: TamperField,
    pub byte_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TamperError {
    #[error("tamper spec {0:?} is not field:byteindex (field = pk, sig or sigN)")]
    Syntax(String),
    #[error("token has no attestation {0} to tamper with")]
    NoSuchAttestation(usize),
    #[error("byte index {index} out of range for a {len}-byte field")]
    OutOfRange { index: usize, len: usize },
}

impl FromStr for TamperSpec {
    type Err = TamperError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TamperError::Syntax(s.to_string());
        let (field, index) = s.split_once(':').ok_or_else(bad)?;
        let byte_index = index.parse().map_err(|_| bad())?;
        let field = match field {
            "pk" => TamperField::PublicKey,
            "sig" => TamperField::Signature(0),
            f => match f.strip_prefix("sig") {
                Some(n) => TamperField::Signature(n.parse().map_err(|_| bad())?),
                None => return Err(bad()),
            },
        };
        Ok(TamperSpec { field, byte_index })
    }
}

impl fmt::Display for TamperSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.field {
            TamperField::PublicKey => write!(f, "pk:{}", self.byte_index),
            TamperField::Signature(n) => write!(f, "sig{}:{}", n, self.byte_index),
        }
    }
}

impl TamperSpec {
    pub fn signature(attestation: usize, byte_index: usize) -> Self {
        TamperSpec { field: TamperField::Signature(attestation), byte_index }
    }

    /// Flips the addressed byte in `token`.
    pub fn apply(&self, token: &mut TrustToken) -> Result<(), TamperError> {
        let bytes: &mut [u8] = match self.field {
            TamperField::PublicKey => token.subject_public_key_mut(),
            TamperField::Signature(n) => token.signature_mut(n).ok_or(TamperError::NoSuchAttestation(n))?,
        };
        let len = bytes.len();
        let byte = bytes.get_mut(self.byte_index).ok_or(TamperError::OutOfRange { index: self.byte_index, len })?;
        *byte ^= 0xff;
        Ok(())
    }
}
