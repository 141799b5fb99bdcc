use std::fmt;

use rand_core::CryptoRngCore;
use rsa::pkcs1::{DecodeRsaPrivateKey, EncodeRsaPrivateKey};
use rsa::signature::{SignatureEncoding, Signer as _, Verifier as _};
use rsa::traits::PublicKeyParts;
use rsa::{BigUint, RsaPrivateKey, RsaPublicKey};
use sha2::Sha256;

use crate::algorithm::SigAlgorithm;
use crate::error::CodecError;

const RSA_BITS: usize = 2048;
const RSA_EXPONENT: u32 = 65_537;

enum SecretKey {
    Rsa(Box<rsa::pkcs1v15::SigningKey<Sha256>>),
    EcP256(p256::ecdsa::SigningKey),
    Ed25519(ed25519_dalek::SigningKey),
}

/// A key pair for one of the supported schemes.
///
/// The public key is held in its canonical byte encoding (see
/// [`SigAlgorithm`]); the private half is kept parsed so repeated signing
/// does not re-decode it.
pub struct KeyMaterial {
    algorithm: SigAlgorithm,
    public_key: Vec<u8>,
    secret: SecretKey,
}

impl fmt::Debug for KeyMaterial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyMaterial")
            .field("algorithm", &self.algorithm)
            .field("public_key", &crate::b64url::encode(&self.public_key))
            .finish_non_exhaustive()
    }
}

/// Generates a fresh key pair.
pub fn keygen<R: CryptoRngCore + ?Sized>(algorithm: SigAlgorithm, rng: &mut R) -> KeyMaterial {
    match algorithm {
        SigAlgorithm::Rsa2048 => {
            let exp = BigUint::from(RSA_EXPONENT);
            let key = RsaPrivateKey::new_with_exp(&mut RngAdapter(rng), RSA_BITS, &exp)
                .expect("RSA-2048 key generation with e=65537 cannot fail");
            KeyMaterial::from_rsa(key)
        }
        SigAlgorithm::EcP256 => {
            let key = p256::ecdsa::SigningKey::random(&mut RngAdapter(rng));
            KeyMaterial::from_p256(key)
        }
        SigAlgorithm::Ed25519 => {
            let key = ed25519_dalek::SigningKey::generate(&mut RngAdapter(rng));
            KeyMaterial::from_ed25519(key)
        }
    }
}

// The signature crates want a sized `CryptoRngCore`; this lets callers pass
// `&mut dyn CryptoRngCore`.
struct RngAdapter<'a, R: ?Sized>(&'a mut R);

impl<R: CryptoRngCore + ?Sized> rand_core::RngCore for RngAdapter<'_, R> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.0.fill_bytes(dest)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand_core::Error> {
        self.0.try_fill_bytes(dest)
    }
}

impl<R: CryptoRngCore + ?Sized> rand_core::CryptoRng for RngAdapter<'_, R> {}

impl KeyMaterial {
    fn from_rsa(key: RsaPrivateKey) -> Self {
        let public_key = left_pad(&key.n().to_bytes_be(), SigAlgorithm::Rsa2048.public_key_len());
        KeyMaterial {
            algorithm: SigAlgorithm::Rsa2048,
            public_key,
            secret: SecretKey::Rsa(Box::new(rsa::pkcs1v15::SigningKey::<Sha256>::new(key))),
        }
    }

    fn from_p256(key: p256::ecdsa::SigningKey) -> Self {
        let point = key.verifying_key().to_encoded_point(false);
        KeyMaterial {
            algorithm: SigAlgorithm::EcP256,
            // drop the 0x04 SEC1 tag
            public_key: point.as_bytes()[1..].to_vec(),
            secret: SecretKey::EcP256(key),
        }
    }

    fn from_ed25519(key: ed25519_dalek::SigningKey) -> Self {
        KeyMaterial {
            algorithm: SigAlgorithm::Ed25519,
            public_key: key.verifying_key().to_bytes().to_vec(),
            secret: SecretKey::Ed25519(key),
        }
    }

    /// Restores a key pair from [`private_key_bytes`](Self::private_key_bytes).
    pub fn from_private_bytes(algorithm: SigAlgorithm, bytes: &[u8]) -> Result<Self, CodecError> {
        let bad = |e: &dyn fmt::Display| CodecError::PrivateKey(e.to_string());
        match algorithm {
            SigAlgorithm::Rsa2048 => {
                let key = RsaPrivateKey::from_pkcs1_der(bytes).map_err(|e| bad(&e))?;
                if key.size() != SigAlgorithm::Rsa2048.public_key_len() || key.e() != &BigUint::from(RSA_EXPONENT) {
                    return Err(CodecError::PrivateKey("not an RSA-2048 key with e=65537".into()));
                }
                Ok(KeyMaterial::from_rsa(key))
            }
            SigAlgorithm::EcP256 => {
                let key = p256::ecdsa::SigningKey::from_slice(bytes).map_err(|e| bad(&e))?;
                Ok(KeyMaterial::from_p256(key))
            }
            SigAlgorithm::Ed25519 => {
                let seed: [u8; 32] = bytes
                    .try_into()
                    .map_err(|_| CodecError::PrivateKey(format!("Ed25519 seed must be 32 bytes, got {}", bytes.len())))?;
                Ok(KeyMaterial::from_ed25519(ed25519_dalek::SigningKey::from_bytes(&seed)))
            }
        }
    }

    pub fn algorithm(&self) -> SigAlgorithm {
        self.algorithm
    }

    pub fn public_key(&self) -> &[u8] {
        &self.public_key
    }

    /// Private key export: PKCS#1 DER for RSA, the 32-byte scalar for P-256,
    /// the 32-byte seed for Ed25519.
    pub fn private_key_bytes(&self) -> Vec<u8> {
        match &self.secret {
            SecretKey::Rsa(key) => {
                let key: &RsaPrivateKey = key.as_ref().as_ref();
                key.to_pkcs1_der().expect("RSA key serializes").as_bytes().to_vec()
            }
            SecretKey::EcP256(key) => key.to_bytes().to_vec(),
            SecretKey::Ed25519(key) => key.to_bytes().to_vec(),
        }
    }

    /// Signs `message` with this key. Output length is `algorithm().signature_len()`.
    pub fn sign(&self, message: &[u8]) -> Vec<u8> {
        match &self.secret {
            SecretKey::Rsa(key) => key.sign(message).to_vec(),
            SecretKey::EcP256(key) => {
                let sig: p256::ecdsa::Signature = key.sign(message);
                sig.to_bytes().to_vec()
            }
            SecretKey::Ed25519(key) => key.sign(message).to_bytes().to_vec(),
        }
    }
}

fn left_pad(bytes: &[u8], len: usize) -> Vec<u8> {
    let mut out = vec![0u8; len.saturating_sub(bytes.len())];
    out.extend_from_slice(bytes);
    out
}

/// Checks that `public_key` has the canonical length for `algorithm`.
pub fn check_public_key(algorithm: SigAlgorithm, public_key: &[u8]) -> Result<(), CodecError> {
    if public_key.len() == algorithm.public_key_len() {
        Ok(())
    } else {
        Err(CodecError::KeyLengthMismatch {
            algorithm: algorithm.as_str(),
            expected: algorithm.public_key_len(),
            actual: public_key.len(),
        })
    }
}

/// Verifies a raw signature.
///
/// A key of the wrong length is a codec error. A correctly sized key that
/// does not decode to a usable public key (off-curve point, degenerate
/// modulus) can only have come from corruption, so it verifies nothing and
/// yields `Ok(false)`.
pub fn verify_signature(
    algorithm: SigAlgorithm,
    public_key: &[u8],
    message: &[u8],
    signature: &[u8],
) -> Result<bool, CodecError> {
    check_public_key(algorithm, public_key)?;
    if signature.len() != algorithm.signature_len() {
        return Ok(false);
    }
    let ok = match algorithm {
        SigAlgorithm::Rsa2048 => {
            let n = BigUint::from_bytes_be(public_key);
            let Ok(key) = RsaPublicKey::new(n, BigUint::from(RSA_EXPONENT)) else {
                return Ok(false);
            };
            let Ok(sig) = rsa::pkcs1v15::Signature::try_from(signature) else {
                return Ok(false);
            };
            rsa::pkcs1v15::VerifyingKey::<Sha256>::new(key).verify(message, &sig).is_ok()
        }
        SigAlgorithm::EcP256 => {
            let mut sec1 = Vec::with_capacity(65);
            sec1.push(0x04);
            sec1.extend_from_slice(public_key);
            let Ok(key) = p256::ecdsa::VerifyingKey::from_sec1_bytes(&sec1) else {
                return Ok(false);
            };
            let Ok(sig) = p256::ecdsa::Signature::from_slice(signature) else {
                return Ok(false);
            };
            key.verify(message, &sig).is_ok()
        }
        SigAlgorithm::Ed25519 => {
            let key_bytes: [u8; 32] = public_key.try_into().expect("length checked");
            let Ok(key) = ed25519_dalek::VerifyingKey::from_bytes(&key_bytes) else {
                return Ok(false);
            };
            let sig = ed25519_dalek::Signature::from_slice(signature).expect("length checked");
            key.verify(message, &sig).is_ok()
        }
    };
    Ok(ok)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn key_lengths_match_algorithm() {
        let mut rng = StdRng::seed_from_u64(7);
        for alg in SigAlgorithm::ALL {
            let k = keygen(alg, &mut rng);
            assert_eq!(k.public_key().len(), alg.public_key_len());
            assert_eq!(k.sign(b"m").len(), alg.signature_len());
        }
    }

    #[test]
    fn private_bytes_round_trip() {
        let mut rng = StdRng::seed_from_u64(8);
        for alg in SigAlgorithm::ALL {
            let k = keygen(alg, &mut rng);
            let restored = KeyMaterial::from_private_bytes(alg, &k.private_key_bytes()).unwrap();
            assert_eq!(restored.public_key(), k.public_key());
            let sig = restored.sign(b"hello");
            assert!(verify_signature(alg, k.public_key(), b"hello", &sig).unwrap());
        }
    }

    #[test]
    fn rsa_signatures_are_deterministic() {
        let mut rng = StdRng::seed_from_u64(9);
        let k = keygen(SigAlgorithm::Rsa2048, &mut rng);
        assert_eq!(k.sign(b"abc"), k.sign(b"abc"));
    }

    #[test]
    fn wrong_key_length_is_codec_error() {
        let err = verify_signature(SigAlgorithm::Ed25519, &[0u8; 31], b"m", &[0u8; 64]).unwrap_err();
        assert!(matches!(err, CodecError::KeyLengthMismatch { expected: 32, actual: 31, .. }));
    }

    #[test]
    fn wrong_signature_length_is_invalid_not_error() {
        let mut rng = StdRng::seed_from_u64(10);
        let k = keygen(SigAlgorithm::EcP256, &mut rng);
        assert!(!verify_signature(SigAlgorithm::EcP256, k.public_key(), b"m", &[1u8; 63]).unwrap());
    }

    #[test]
    fn garbage_private_key_rejected() {
        assert!(KeyMaterial::from_private_bytes(SigAlgorithm::Rsa2048, b"junk").is_err());
        assert!(KeyMaterial::from_private_bytes(SigAlgorithm::Ed25519, &[0u8; 5]).is_err());
        assert!(KeyMaterial::from_private_bytes(SigAlgorithm::EcP256, &[0u8; 32]).is_err());
    }
}
