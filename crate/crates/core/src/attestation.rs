use crate::algorithm::SigAlgorithm;
use crate::error::CodecError;
use crate::keys::{self, KeyMaterial};
use crate::server_id::ServerId;

/// One server's signature over a user's public key.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Attestation {
    pub issuer: ServerId,
    pub signature: Vec<u8>,
}

/// Signs `subject_pk` with the server's key.
///
/// The signed message is the raw canonical public-key bytes, nothing else.
pub fn sign_attestation(server_key: &KeyMaterial, issuer: &ServerId, subject_pk: &[u8]) -> Result<Attestation, CodecError> {
    SigAlgorithm::from_public_key_len(subject_pk.len())?;
    Ok(Attestation {
        issuer: issuer.clone(),
        signature: server_key.sign(subject_pk),
    })
}

/// Checks `att` against the issuer's public key. Invalid signatures are
/// `Ok(false)`; only malformed key bytes are errors.
pub fn verify_attestation(
    att: &Attestation,
    issuer_pk: &[u8],
    issuer_alg: SigAlgorithm,
    subject_pk: &[u8],
) -> Result<bool, CodecError> {
    keys::check_public_key(issuer_alg, issuer_pk)?;
    SigAlgorithm::from_public_key_len(subject_pk.len())?;
    keys::verify_signature(issuer_alg, issuer_pk, subject_pk, &att.signature)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keys::keygen;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn sid(s: &str) -> ServerId {
        ServerId::new(s).unwrap()
    }

    #[test]
    fn round_trip_and_key_mismatch() {
        let mut rng = StdRng::seed_from_u64(1);
        for alg in SigAlgorithm::ALL {
            let s1 = keygen(alg, &mut rng);
            let s2 = keygen(alg, &mut rng);
            let user = keygen(SigAlgorithm::Ed25519, &mut rng);
            let att = sign_attestation(&s1, &sid("s1"), user.public_key()).unwrap();
            assert_eq!(att.issuer, sid("s1"));
            assert!(verify_attestation(&att, s1.public_key(), alg, user.public_key()).unwrap());
            assert!(!verify_attestation(&att, s2.public_key(), alg, user.public_key()).unwrap());
        }
    }

    #[test]
    fn other_subject_fails() {
        let mut rng = StdRng::seed_from_u64(2);
        let s1 = keygen(SigAlgorithm::EcP256, &mut rng);
        let user = keygen(SigAlgorithm::EcP256, &mut rng);
        let other = keygen(SigAlgorithm::EcP256, &mut rng);
        let att = sign_attestation(&s1, &sid("s1"), user.public_key()).unwrap();
        assert!(!verify_attestation(&att, s1.public_key(), SigAlgorithm::EcP256, other.public_key()).unwrap());
    }

    #[test]
    fn flipped_signature_bytes_verify_zero() {
        let mut rng = StdRng::seed_from_u64(3);
        for alg in SigAlgorithm::ALL {
            let s1 = keygen(alg, &mut rng);
            let user = keygen(alg, &mut rng);
            let att = sign_attestation(&s1, &sid("s1"), user.public_key()).unwrap();
            for _ in 0..10 {
                let mut bad = att.clone();
                let pos = rng.gen_range(0..bad.signature.len());
                bad.signature[pos] ^= 0xff;
                assert!(!verify_attestation(&bad, s1.public_key(), alg, user.public_key()).unwrap(), "{alg} pos {pos}");
            }
        }
    }

    #[test]
    fn rotation_invalidates() {
        let mut rng = StdRng::seed_from_u64(4);
        let old = keygen(SigAlgorithm::Ed25519, &mut rng);
        let user = keygen(SigAlgorithm::Ed25519, &mut rng);
        let att = sign_attestation(&old, &sid("s1"), user.public_key()).unwrap();
        let rotated = keygen(SigAlgorithm::Ed25519, &mut rng);
        assert!(!verify_attestation(&att, rotated.public_key(), SigAlgorithm::Ed25519, user.public_key()).unwrap());
    }

    #[test]
    fn malformed_inputs_are_codec_errors() {
        let mut rng = StdRng::seed_from_u64(5);
        let s1 = keygen(SigAlgorithm::Ed25519, &mut rng);
        assert_eq!(
            sign_attestation(&s1, &sid("s1"), &[0u8; 10]).unwrap_err(),
            CodecError::PublicKeyLength(10)
        );
        let att = sign_attestation(&s1, &sid("s1"), &[7u8; 32]).unwrap();
        assert!(verify_attestation(&att, &[0u8; 33], SigAlgorithm::Ed25519, &[7u8; 32]).is_err());
        assert!(verify_attestation(&att, s1.public_key(), SigAlgorithm::Ed25519, &[7u8; 12]).is_err());
    }
}
