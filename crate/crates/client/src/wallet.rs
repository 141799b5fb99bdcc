use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use trustzero_core::{
    b64url, encode_token, keygen, merge_attestation, trust_score, verify_attestation, Attestation, CodecError,
    IssuerVerdict, KeyMaterial, ServerId, SigAlgorithm, TokenError, TrustDirectory, TrustToken, DEFAULT_MAX_ATTESTATIONS,
};

const WALLET_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum WalletError {
    #[error("wallet already exists at {0} (use --force to overwrite)")]
    Exists(PathBuf),
    #[error("no wallet at {0}")]
    Missing(PathBuf),
    #[error("wallet io: {0}")]
    Io(#[from] io::Error),
    #[error("wallet json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("wallet format: {0}")]
    Format(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Token(#[from] TokenError),
    #[error("in-memory wallet has no storage path")]
    NoPath,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum GrantError {
    #[error("grant from {0}, which is not in the directory")]
    UnknownIssuer(ServerId),
    #[error("grant from {0} does not verify against its directory key")]
    Forged(ServerId),
    #[error("grant rejected: {0}")]
    Token(String),
}

#[derive(Serialize, Deserialize)]
struct WalletFile {
    version: u32,
    algorithm: SigAlgorithm,
    public_key_b64url: String,
    private_key_b64url: String,
    attestations: Vec<AttestationFile>,
}

#[derive(Serialize, Deserialize)]
struct AttestationFile {
    issuer: ServerId,
    signature_b64url: String,
}

/// The user's identity and collected attestations.
pub struct Wallet {
    keys: KeyMaterial,
    token: TrustToken,
    path: Option<PathBuf>,
}

impl Wallet {
    /// A fresh identity that is never written to disk.
    pub fn in_memory(algorithm: SigAlgorithm) -> Self {
        Self::from_keys(keygen(algorithm, &mut rand_core::OsRng))
    }

    pub fn from_keys(keys: KeyMaterial) -> Self {
        let token = TrustToken::new(keys.public_key().to_vec()).expect("generated key has canonical length");
        Wallet { keys, token, path: None }
    }

    /// Creates and persists a new wallet at `path`.
    pub fn init(algorithm: SigAlgorithm, path: impl AsRef<Path>, force: bool) -> Result<Self, WalletError> {
        let path = path.as_ref();
        if path.exists() && !force {
            return Err(WalletError::Exists(path.to_path_buf()));
        }
        let mut wallet = Self::in_memory(algorithm);
        wallet.path = Some(path.to_path_buf());
        wallet.save()?;
        Ok(wallet)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, WalletError> {
        let path = path.as_ref();
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(WalletError::Missing(path.to_path_buf())),
            Err(e) => return Err(e.into()),
        };
        let mut wallet = Self::from_json(&text)?;
        wallet.path = Some(path.to_path_buf());
        Ok(wallet)
    }

    fn from_json(text: &str) -> Result<Self, WalletError> {
        let file: WalletFile = serde_json::from_str(text)?;
        if file.version != WALLET_VERSION {
            return Err(WalletError::Format(format!("unsupported wallet version {}", file.version)));
        }
        let decode = |s: &str| b64url::decode(s).map_err(|e| CodecError::Base64(e.to_string()));
        let keys = KeyMaterial::from_private_bytes(file.algorithm, &decode(&file.private_key_b64url)?)?;
        if keys.public_key() != decode(&file.public_key_b64url)? {
            return Err(WalletError::Format("public key does not match private key".into()));
        }
        let attestations = file
            .attestations
            .into_iter()
            .map(|a| Ok(Attestation { issuer: a.issuer, signature: decode(&a.signature_b64url)? }))
            .collect::<Result<Vec<_>, WalletError>>()?;
        let token = TrustToken::from_parts(keys.public_key().to_vec(), attestations, DEFAULT_MAX_ATTESTATIONS)?;
        Ok(Wallet { keys, token, path: None })
    }

    pub fn to_json(&self) -> String {
        let file = WalletFile {
            version: WALLET_VERSION,
            algorithm: self.keys.algorithm(),
            public_key_b64url: b64url::encode(self.keys.public_key()),
            private_key_b64url: b64url::encode(&self.keys.private_key_bytes()),
            attestations: self
                .token
                .attestations()
                .iter()
                .map(|a| AttestationFile { issuer: a.issuer.clone(), signature_b64url: b64url::encode(&a.signature) })
                .collect(),
        };
        let mut text = serde_json::to_string_pretty(&file).expect("wallet serializes");
        text.push('\n');
        text
    }

    /// Writes the wallet (owner-only permissions) via temp file and rename.
    pub fn save(&self) -> Result<(), WalletError> {
        let path = self.path.as_ref().ok_or(WalletError::NoPath)?;
        let tmp = path.with_extension("tmp");
        {
            let mut f = private_file(&tmp)?;
            f.write_all(self.to_json().as_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn keys(&self) -> &KeyMaterial {
        &self.keys
    }

    pub fn public_key(&self) -> &[u8] {
        self.keys.public_key()
    }

    pub fn token(&self) -> &TrustToken {
        &self.token
    }

    /// The `User-Key-Signatures` value for the current token.
    pub fn header_value(&self) -> String {
        encode_token(&self.token).expect("wallet token stays within limits")
    }

    /// Verifies a grant against `directory` and merges it (renewing any
    /// attestation from the same issuer). Unverified grants never enter the
    /// wallet.
    pub fn accept_grant(&mut self, grant: Attestation, directory: &TrustDirectory) -> Result<(), GrantError> {
        let entry = directory.get(&grant.issuer).ok_or_else(|| GrantError::UnknownIssuer(grant.issuer.clone()))?;
        let valid = verify_attestation(&grant, &entry.public_key, entry.algorithm, self.keys.public_key()).unwrap_or(false);
        if !valid {
            return Err(GrantError::Forged(grant.issuer));
        }
        self.token = merge_attestation(self.token.clone(), grant).map_err(|e| GrantError::Token(e.to_string()))?;
        Ok(())
    }

    /// Removes attestations that verify 0 under `directory` (for example after
    /// an issuer rotated its key). Unknown issuers are kept. Returns the
    /// removed issuers.
    pub fn prune_invalid(&mut self, directory: &TrustDirectory) -> Vec<ServerId> {
        let report = trust_score(&self.token, directory);
        let bad: Vec<ServerId> = report
            .per_issuer
            .into_iter()
            .filter(|(_, v)| *v == IssuerVerdict::Invalid)
            .map(|(id, _)| id)
            .collect();
        self.token.retain(|a| !bad.contains(&a.issuer));
        bad
    }

    /// Human-readable listing of the wallet scored against `directory`.
    pub fn show(&self, directory: &TrustDirectory) -> String {
        let report = trust_score(&self.token, directory);
        let mut out = String::new();
        if let Some(p) = &self.path {
            let _ = writeln!(out, "wallet      {}", p.display());
        }
        let _ = writeln!(out, "algorithm   {}", self.keys.algorithm());
        let _ = writeln!(out, "public key  {}", b64url::encode(self.keys.public_key()));
        let _ = writeln!(out, "{} attestations, score {}", self.token.len(), report.score);
        let width = report.per_issuer.iter().map(|(id, _)| id.as_str().len()).max().unwrap_or(0);
        for (att, (_, verdict)) in self.token.attestations().iter().zip(&report.per_issuer) {
            let _ = writeln!(out, "  {:width$}  sig {}  {}", att.issuer.as_str(), fingerprint(&att.signature), verdict);
        }
        out
    }
}

/// First 8 bytes of SHA-256, hex.
pub fn fingerprint(bytes: &[u8]) -> String {
    Sha256::digest(bytes)[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn private_file(path: &Path) -> io::Result<File> {
    let mut opts = OpenOptions::new();
    opts.write(true).create(true).truncate(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        opts.mode(0o600);
    }
    opts.open(path)
}

/// Exclusive advisory lock on `<wallet>.lock`, held for a read-modify-write.
pub struct WalletLock {
    _file: File,
}

impl WalletLock {
    pub fn acquire(wallet_path: &Path) -> io::Result<Self> {
        let mut lock_path = wallet_path.as_os_str().to_owned();
        lock_path.push(".lock");
        let file = OpenOptions::new().create(true).truncate(false).write(true).open(PathBuf::from(lock_path))?;
        file.lock()?;
        Ok(WalletLock { _file: file })
    }
}
