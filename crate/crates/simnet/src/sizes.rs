use serde::{Deserialize, Serialize};
use trustzero_core::{
    encode_token_with_limit, keygen, sign_attestation, token_wire_size, ServerId, SigAlgorithm, TrustToken,
};

use crate::stats::linear_fit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeRow {
    pub algorithm: SigAlgorithm,
    pub attestations: usize,
    /// Public key plus signature bytes of a token actually built with this
    /// many attestations.
    pub measured_bytes: usize,
    pub predicted_bytes: usize,
    /// Length of the encoded header value.
    pub header_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeFit {
    pub algorithm: SigAlgorithm,
    pub slope: f64,
    pub intercept: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeReport {
    pub rows: Vec<SizeRow>,
    pub fits: Vec<SizeFit>,
}

impl SizeReport {
    pub fn fit(&self, algorithm: SigAlgorithm) -> Option<&SizeFit> {
        self.fits.iter().find(|f| f.algorithm == algorithm)
    }

    /// Every measured size equals the predicted one.
    pub fn exact(&self) -> bool {
        self.rows.iter().all(|r| r.measured_bytes == r.predicted_bytes)
    }
}

/// Builds real tokens with 0..=`max_n` attestations for every algorithm
/// (user and issuers share the algorithm) and records their sizes.
pub fn run_size_report(max_n: usize) -> SizeReport {
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    let mut rng = rand::rngs::OsRng;
    for alg in SigAlgorithm::ALL {
        let user = keygen(alg, &mut rng);
        let issuer = keygen(alg, &mut rng);
        let mut token = TrustToken::new(user.public_key().to_vec()).expect("generated key");
        let mut attestations = Vec::with_capacity(max_n);
        for n in 0..=max_n {
            let measured = token.subject_public_key().len() + token.attestations().iter().map(|a| a.signature.len()).sum::<usize>();
            rows.push(SizeRow {
                algorithm: alg,
                attestations: n,
                measured_bytes: measured,
                predicted_bytes: token_wire_size(alg, n),
                header_bytes: encode_token_with_limit(&token, max_n.max(1)).expect("within limit").len(),
            });
            if n == max_n {
                break;
            }
            let id = ServerId::new(format!("s{}", n + 1)).expect("valid id");
            attestations.push(sign_attestation(&issuer, &id, user.public_key()).expect("matching key"));
            token = TrustToken::from_parts(user.public_key().to_vec(), attestations.clone(), max_n.max(1)).expect("within limit");
        }
        let points: Vec<(f64, f64)> =
            rows.iter().filter(|r| r.algorithm == alg).map(|r| (r.attestations as f64, r.measured_bytes as f64)).collect();
        if let Some((slope, intercept)) = linear_fit(&points) {
            fits.push(SizeFit { algorithm: alg, slope, intercept });
        }
    }
    SizeReport { rows, fits }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_report_is_linear() {
        let r = run_size_report(4);
        assert_eq!(r.rows.len(), 15);
        assert!(r.exact());
        let ed = r.fit(SigAlgorithm::Ed25519).unwrap();
        assert_eq!((ed.slope, ed.intercept), (64.0, 32.0));
        let row = r.rows.iter().find(|r| r.algorithm == SigAlgorithm::EcP256 && r.attestations == 0).unwrap();
        assert_eq!(row.header_bytes, "A".repeat(86).len() + 2);
    }
}
