use std::fmt;

use crate::attestation::verify_attestation;
use crate::directory::TrustDirectory;
use crate::server_id::ServerId;
use crate::token::TrustToken;

/// Outcome of checking one attestation against the directory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IssuerVerdict {
    Valid,
    Invalid,
    /// The issuer has no directory entry.
    Unknown,
}

impl IssuerVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            IssuerVerdict::Valid => "valid",
            IssuerVerdict::Invalid => "invalid",
            IssuerVerdict::Unknown => "unknown",
        }
    }
}

impl fmt::Display for IssuerVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoreReport {
    pub score: u32,
    /// One verdict per attestation, in token order.
    pub per_issuer: Vec<(ServerId, IssuerVerdict)>,
}

impl ScoreReport {
    pub fn verdict(&self, issuer: &ServerId) -> Option<IssuerVerdict> {
        self.per_issuer.iter().find(|(id, _)| id == issuer).map(|(_, v)| *v)
    }

    pub fn count(&self, verdict: IssuerVerdict) -> usize {
        self.per_issuer.iter().filter(|(_, v)| *v == verdict).count()
    }

    pub fn any_invalid(&self) -> bool {
        self.count(IssuerVerdict::Invalid) > 0
    }
}

/// Counts attestations that verify against their issuer's current key.
pub fn trust_score(token: &TrustToken, directory: &TrustDirectory) -> ScoreReport {
    let subject = token.subject_public_key();
    let per_issuer: Vec<_> = token
        .attestations()
        .iter()
        .map(|att| {
            let verdict = match directory.get(&att.issuer) {
                None => IssuerVerdict::Unknown,
                Some(entry) => match verify_attestation(att, &entry.public_key, entry.algorithm, subject) {
                    Ok(true) => IssuerVerdict::Valid,
                    // directory and token both validate key lengths, so an Err
                    // here cannot occur; treat it as a failed check regardless
                    Ok(false) | Err(_) => IssuerVerdict::Invalid,
                },
            };
            (att.issuer.clone(), verdict)
        })
        .collect();
    let score = per_issuer.iter().filter(|(_, v)| *v == IssuerVerdict::Valid).count() as u32;
    ScoreReport { score, per_issuer }
}
