//! Deterministic primitives shared by every other module.
//!
//! Ed25519 provides the deterministic key derivation and signatures, SHA-256
//! the one-way digest. Nothing here touches a clock or performs I/O.

use std::fmt;

use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use sha2::{Digest as _, Sha256};

pub const SEED_LEN: usize = 32;
pub const PUBLIC_KEY_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 64;

/// 32-byte output of [`digest`]; also the input of [`det_key_gen`].
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Seed(pub [u8; SEED_LEN]);

impl Seed {
    pub fn as_bytes(&self) -> &[u8; SEED_LEN] {
        &self.0
    }
}

impl fmt::Debug for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Seed({})", hex::encode(self.0))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PublicKey(pub [u8; PUBLIC_KEY_LEN]);

impl PublicKey {
    pub fn as_bytes(&self) -> &[u8; PUBLIC_KEY_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", self.to_hex())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Signature(pub [u8; SIGNATURE_LEN]);

impl Signature {
    pub fn as_bytes(&self) -> &[u8; SIGNATURE_LEN] {
        &self.0
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({}..)", hex::encode(&self.0[..8]))
    }
}

/// A signing key together with its verification key.
///
/// The private half is only reachable through [`KeyPair::sign`]; there is no
/// accessor that returns the secret bytes.
#[derive(Clone)]
pub struct KeyPair {
    signing: SigningKey,
    public: PublicKey,
}

impl KeyPair {
    pub fn public(&self) -> PublicKey {
        self.public
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        det_sign(self, message)
    }
}

impl PartialEq for KeyPair {
    fn eq(&self, other: &Self) -> bool {
        self.signing.to_bytes() == other.signing.to_bytes()
    }
}

impl Eq for KeyPair {}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair").field("public", &self.public).finish_non_exhaustive()
    }
}

/// Derives a key pair from the seed; the seed bytes are the Ed25519 secret key.
pub fn det_key_gen(seed: &Seed) -> KeyPair {
    let signing = SigningKey::from_bytes(&seed.0);
    let public = PublicKey(signing.verifying_key().to_bytes());
    KeyPair { signing, public }
}

pub fn det_sign(key: &KeyPair, message: &[u8]) -> Signature {
    Signature(key.signing.sign(message).to_bytes())
}

/// Malformed keys or signatures verify as `false`.
pub fn ver_sign(key: &PublicKey, message: &[u8], sig: &Signature) -> bool {
    let Ok(vk) = VerifyingKey::from_bytes(&key.0) else {
        return false;
    };
    let sig = ed25519_dalek::Signature::from_bytes(&sig.0);
    vk.verify(message, &sig).is_ok()
}

pub fn digest(message: &[u8]) -> Seed {
    Seed(Sha256::digest(message).into())
}

/// Digest of several fields without an intermediate buffer.
pub fn digest_parts(parts: &[&[u8]]) -> Seed {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part);
    }
    Seed(hasher.finalize().into())
}

/// Canonical seed for pseudonym `instance` of client `cid` in `epoch_id`:
/// `len(cid) as u32 BE ‖ cid ‖ epoch_id u64 BE ‖ instance u64 BE`, digested.
pub fn pseudonym_seed(cid: &[u8], epoch_id: u64, instance: u64) -> Seed {
    let len = (cid.len() as u32).to_be_bytes();
    digest_parts(&[&len, cid, &epoch_id.to_be_bytes(), &instance.to_be_bytes()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn seed_from(rng: &mut impl RngCore) -> Seed {
        let mut s = [0u8; 32];
        rng.fill_bytes(&mut s);
        Seed(s)
    }

    #[test]
    fn keygen_is_deterministic() {
        let s = Seed([7u8; 32]);
        let a = det_key_gen(&s);
        let b = det_key_gen(&s);
        assert_eq!(a, b);
        assert_eq!(a.public(), b.public());
    }

    #[test]
    fn distinct_seeds_give_distinct_keys() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut seen = HashSet::new();
        for _ in 0..10_000 {
            let kp = det_key_gen(&seed_from(&mut rng));
            assert!(seen.insert(kp.public()), "public key collision");
        }
    }

    #[test]
    fn sign_verify_roundtrip() {
        let kp = det_key_gen(&Seed([3u8; 32]));
        let sig = det_sign(&kp, b"e0");
        assert!(ver_sign(&kp.public(), b"e0", &sig));
        assert_eq!(sig, det_sign(&kp, b"e0"));
        assert_ne!(sig, det_sign(&kp, b"e1"));
    }

    #[test]
    fn wrong_key_rejects() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let k1 = det_key_gen(&seed_from(&mut rng));
            let k2 = det_key_gen(&seed_from(&mut rng));
            let sig = det_sign(&k1, b"message");
            assert!(!ver_sign(&k2.public(), b"message", &sig));
        }
    }

    #[test]
    fn bit_flips_reject() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let kp = det_key_gen(&Seed([9u8; 32]));
        let msg = b"capability label".to_vec();
        let sig = det_sign(&kp, &msg);
        for _ in 0..100 {
            let mut bad = sig;
            let bit = rng.gen_range(0..SIGNATURE_LEN * 8);
            bad.0[bit / 8] ^= 1 << (bit % 8);
            assert!(!ver_sign(&kp.public(), &msg, &bad));

            let mut bad_msg = msg.clone();
            let bit = rng.gen_range(0..bad_msg.len() * 8);
            bad_msg[bit / 8] ^= 1 << (bit % 8);
            assert!(!ver_sign(&kp.public(), &bad_msg, &sig));
        }
    }

    #[test]
    fn malformed_public_key_is_false_not_panic() {
        // y = 2 does not decompress to a curve point.
        let mut bytes = [0u8; 32];
        bytes[0] = 2;
        let sig = Signature([0u8; 64]);
        assert!(!ver_sign(&PublicKey(bytes), b"x", &sig));
        assert!(!ver_sign(&PublicKey([0xff; 32]), b"x", &sig));
    }

    #[test]
    fn sha256_empty_vector() {
        assert_eq!(hex::encode(digest(b"").0), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn digest_separates_trailing_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let len = rng.gen_range(0..64);
            let mut x = vec![0u8; len];
            rng.fill_bytes(&mut x);
            let mut y = x.clone();
            y.push(0);
            assert_ne!(digest(&x), digest(&y));
            assert_eq!(digest(&x), digest(&x));
        }
    }

    #[test]
    fn pseudonym_seed_encoding_is_fixed() {
        let cid = [1u8; 32];
        let mut manual = Vec::new();
        manual.extend_from_slice(&32u32.to_be_bytes());
        manual.extend_from_slice(&cid);
        manual.extend_from_slice(&5u64.to_be_bytes());
        manual.extend_from_slice(&2u64.to_be_bytes());
        assert_eq!(pseudonym_seed(&cid, 5, 2), digest(&manual));
        assert_ne!(pseudonym_seed(&cid, 5, 2), pseudonym_seed(&cid, 2, 5));
    }

    proptest::proptest! {
        #[test]
        fn keygen_and_sign_referentially_transparent(seed in proptest::array::uniform32(proptest::num::u8::ANY), msg in proptest::collection::vec(proptest::num::u8::ANY, 0..128)) {
            let kp = det_key_gen(&Seed(seed));
            let again = det_key_gen(&Seed(seed));
            proptest::prop_assert_eq!(kp.public(), again.public());
            let sig = det_sign(&kp, &msg);
            proptest::prop_assert_eq!(sig, det_sign(&again, &msg));
            proptest::prop_assert!(ver_sign(&kp.public(), &msg, &sig));
        }
    }
}
