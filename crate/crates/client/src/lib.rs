//! User side of the protocol: a wallet holding the user's key pair and
//! collected attestations, and an HTTP client that presents the token on
//! every request and harvests verified grants from responses.

pub mod client;
pub mod tamper;
pub mod wallet;

pub use client::{SendError, SendOptions, SendOutcome, TrustClient};
pub use reqwest::Method;
pub use tamper::{TamperField, TamperSpec};
pub use wallet::{fingerprint, GrantError, Wallet, WalletError, WalletLock};

use std::path::Path;

use trustzero_core::{DirectoryError, TrustDirectory};

/// Loads a pinned directory file; a missing file is an empty directory.
pub fn load_directory(path: &Path) -> Result<TrustDirectory, DirectoryError> {
    match std::fs::read_to_string(path) {
        Ok(text) => TrustDirectory::from_json(&text),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(TrustDirectory::new()),
        Err(e) => Err(DirectoryError::Json(serde_json::Error::io(e))),
    }
}

pub fn save_directory(path: &Path, directory: &TrustDirectory) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, directory.to_json())?;
    std::fs::rename(tmp, path)
}
