use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::algorithm::SigAlgorithm;
use crate::b64url;
use crate::error::CodecError;
use crate::keys::check_public_key;
use crate::server_id::ServerId;

/// A server's current public key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectoryEntry {
    pub algorithm: SigAlgorithm,
    pub public_key: Vec<u8>,
}

/// JSON form of one directory entry, as served by a gateway's key endpoint
/// and stored in directory files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublishedKey {
    pub server_id: ServerId,
    pub algorithm: SigAlgorithm,
    pub public_key_b64url: String,
}

impl PublishedKey {
    pub fn new(server_id: ServerId, algorithm: SigAlgorithm, public_key: &[u8]) -> Self {
        PublishedKey { server_id, algorithm, public_key_b64url: b64url::encode(public_key) }
    }

    pub fn into_entry(self) -> Result<(ServerId, DirectoryEntry), CodecError> {
        let public_key = b64url::decode(&self.public_key_b64url).map_err(|e| CodecError::Base64(e.to_string()))?;
        check_public_key(self.algorithm, &public_key)?;
        Ok((self.server_id, DirectoryEntry { algorithm: self.algorithm, public_key }))
    }
}

/// Server id to current public key, as seen by one verifier.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrustDirectory {
    entries: BTreeMap<ServerId, DirectoryEntry>,
}

#[derive(Serialize, Deserialize)]
struct DirectoryFile {
    entries: Vec<PublishedKey>,
}

impl TrustDirectory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds or replaces the key for `id`. Returns the previous entry.
    pub fn insert(
        &mut self,
        id: ServerId,
        algorithm: SigAlgorithm,
        public_key: Vec<u8>,
    ) -> Result<Option<DirectoryEntry>, CodecError> {
        check_public_key(algorithm, &public_key)?;
        Ok(self.entries.insert(id, DirectoryEntry { algorithm, public_key }))
    }

    pub fn insert_published(&mut self, key: PublishedKey) -> Result<Option<DirectoryEntry>, CodecError> {
        let (id, entry) = key.into_entry()?;
        Ok(self.entries.insert(id, entry))
    }

    pub fn get(&self, id: &ServerId) -> Option<&DirectoryEntry> {
        self.entries.get(id)
    }

    pub fn remove(&mut self, id: &ServerId) -> Option<DirectoryEntry> {
        self.entries.remove(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ServerId, &DirectoryEntry)> {
        self.entries.iter()
    }

    pub fn published(&self) -> Vec<PublishedKey> {
        self.entries
            .iter()
            .map(|(id, e)| PublishedKey::new(id.clone(), e.algorithm, &e.public_key))
            .collect()
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(&DirectoryFile { entries: self.published() })
            .expect("directory serializes");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self, DirectoryError> {
        let file: DirectoryFile = serde_json::from_str(text)?;
        let mut dir = TrustDirectory::new();
        for key in file.entries {
            let id = key.server_id.clone();
            if dir.insert_published(key)?.is_some() {
                return Err(DirectoryError::Duplicate(id));
            }
        }
        Ok(dir)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DirectoryError {
    #[error("directory JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("server {0} listed twice")]
    Duplicate(ServerId),
}
