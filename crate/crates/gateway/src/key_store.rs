use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use trustzero_core::{b64url, KeyMaterial, ServerId, SigAlgorithm};

#[derive(Serialize, Deserialize)]
struct KeyFile {
    server_id: ServerId,
    algorithm: SigAlgorithm,
    private_key_b64url: String,
}

#[derive(Debug, thiserror::Error)]
pub enum KeyFileError {
    #[error("key file io: {0}")]
    Io(#[from] io::Error),
    #[error("key file json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("key file: {0}")]
    Codec(#[from] trustzero_core::CodecError),
    #[error("key file belongs to {found} / {found_alg}, configured {expected} / {expected_alg}")]
    Mismatch { found: ServerId, found_alg: SigAlgorithm, expected: ServerId, expected_alg: SigAlgorithm },
}

pub fn load_key(path: &Path, id: &ServerId, algorithm: SigAlgorithm) -> Result<Option<KeyMaterial>, KeyFileError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let file: KeyFile = serde_json::from_str(&text)?;
    if &file.server_id != id || file.algorithm != algorithm {
        return Err(KeyFileError::Mismatch {
            found: file.server_id,
            found_alg: file.algorithm,
            expected: id.clone(),
            expected_alg: algorithm,
        });
    }
    let bytes = b64url::decode(&file.private_key_b64url)
        .map_err(|e| trustzero_core::CodecError::Base64(e.to_string()))?;
    Ok(Some(KeyMaterial::from_private_bytes(algorithm, &bytes)?))
}

/// Writes the key atomically (temp file + rename), readable by owner only.
pub fn save_key(path: &Path, id: &ServerId, key: &KeyMaterial) -> Result<(), KeyFileError> {
    let file = KeyFile {
        server_id: id.clone(),
        algorithm: key.algorithm(),
        private_key_b64url: b64url::encode(&key.private_key_bytes()),
    };
    let tmp = path.with_extension("tmp");
    {
        let mut opts = fs::OpenOptions::new();
        opts.write(true).create(true).truncate(true);
        #[cfg(unix)]
        {
            use std::os::unix::fs::OpenOptionsExt;
            opts.mode(0o600);
        }
        let mut f = opts.open(&tmp)?;
        f.write_all(serde_json::to_string_pretty(&file)?.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
