use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::CodecError;

pub const MAX_SERVER_ID_LEN: usize = 64;

/// Identifier of an attesting server, 1-64 characters from `[A-Za-z0-9._-]`.
///
/// The alphabet excludes `:` and `=` so ids can be embedded in the token
/// header without escaping.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ServerId(String);

impl ServerId {
    pub fn new(id: impl Into<String>) -> Result<Self, CodecError> {
        let id = id.into();
        if Self::is_valid(&id) {
            Ok(ServerId(id))
        } else {
            Err(CodecError::ServerId(id))
        }
    }

    pub fn is_valid(id: &str) -> bool {
        !id.is_empty()
            && id.len() <= MAX_SERVER_ID_LEN
            && id.bytes().all(|b| b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-'))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ServerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for ServerId {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ServerId::new(s)
    }
}

impl TryFrom<String> for ServerId {
    type Error = CodecError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        ServerId::new(value)
    }
}

impl From<ServerId> for String {
    fn from(id: ServerId) -> String {
        id.0
    }
}

impl AsRef<str> for ServerId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}
