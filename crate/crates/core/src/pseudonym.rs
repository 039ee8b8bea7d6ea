//! Range-revocable pseudonyms: creation, capability generation and the
//! genuineness check run by verifiers.

use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::crypto::{self, det_key_gen, pseudonym_seed, KeyPair, PublicKey, Signature};
use crate::slot_tree::{path_to_root, EpochConfig, NodeLabel, TreeError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PseudonymError {
    #[error("instance {instance} outside [1, {max}]")]
    InstanceOutOfBounds { instance: u32, max: u32 },
    #[error("pseudonym is for epoch {pseudonym} but the tree is for epoch {tree}")]
    EpochMismatch { pseudonym: u64, tree: u64 },
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// Client identifier: a 32-byte bearer secret shared by the client and the PMs.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClientId(pub [u8; 32]);

impl fmt::Debug for ClientId {
    // never print the secret
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ClientId(#{})", hex::encode(&crypto::digest(&self.0).0[..4]))
    }
}

/// Bytes the PM endorses: `epoch_id u64 BE ‖ pseudonym public key`.
pub fn endorsement_message(epoch_id: u64, public: &PublicKey) -> [u8; 40] {
    let mut out = [0u8; 40];
    out[..8].copy_from_slice(&epoch_id.to_be_bytes());
    out[8..].copy_from_slice(public.as_bytes());
    out
}

/// A pseudonym `⟨cid, epoch, i, K⁻, K⁺, sig⟩`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Rrp {
    pub cid: ClientId,
    pub epoch_id: u64,
    pub instance: u32,
    keypair: KeyPair,
    pub endorsement: Signature,
}

impl Rrp {
    pub fn public(&self) -> PublicKey {
        self.keypair.public()
    }

    /// Rebuilds a pseudonym from the endorsement a PM returned; the client
    /// derives the key pair itself from its `cid`.
    pub fn from_endorsement(cid: ClientId, epoch_id: u64, instance: u32, endorsement: Signature) -> Self {
        let keypair = pseudonym_keypair(&cid, epoch_id, instance);
        Rrp { cid, epoch_id, instance, keypair, endorsement }
    }

    /// Public key of pseudonym `instance` without building an endorsement.
    pub fn derive_public(cid: &ClientId, epoch_id: u64, instance: u32) -> PublicKey {
        pseudonym_keypair(cid, epoch_id, instance).public()
    }

    /// True when the endorsement is the PM's signature over this pseudonym.
    pub fn endorsed_by(&self, pm_public: &PublicKey) -> bool {
        crypto::ver_sign(pm_public, &endorsement_message(self.epoch_id, &self.public()), &self.endorsement)
    }

    pub fn latchkey(&self, label: NodeLabel) -> Latchkey {
        Latchkey { label, sig: self.keypair.sign(&label.canonical_bytes()) }
    }
}

fn pseudonym_keypair(cid: &ClientId, epoch_id: u64, instance: u32) -> KeyPair {
    det_key_gen(&pseudonym_seed(&cid.0, epoch_id, instance as u64))
}

/// Deterministic: the PM can always re-create any pseudonym it issued.
pub fn create_rrp(
    cid: ClientId,
    epoch_id: u64,
    instance: u32,
    pm_key: &KeyPair,
    max_instances: u32,
) -> Result<Rrp, PseudonymError> {
    if instance == 0 || instance > max_instances {
        return Err(PseudonymError::InstanceOutOfBounds { instance, max: max_instances });
    }
    let keypair = pseudonym_keypair(&cid, epoch_id, instance);
    let endorsement = pm_key.sign(&endorsement_message(epoch_id, &keypair.public()));
    Ok(Rrp { cid, epoch_id, instance, keypair, endorsement })
}

/// Public keys of instances `1..=max_instances` of a client in one epoch.
pub fn pseudonym_public_keys_of(cid: &ClientId, epoch_id: u64, max_instances: u32) -> Vec<PublicKey> {
    (1..=max_instances).map(|i| pseudonym_keypair(cid, epoch_id, i).public()).collect()
}

/// Signature of a pseudonym's private key over one node label.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Latchkey {
    pub label: NodeLabel,
    pub sig: Signature,
}

/// Slot-bound token: `⟨K⁺, sig_p, l_leaf, …, l_root⟩` plus the epoch it
/// belongs to.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Capability {
    pub epoch_id: u64,
    pub pseudonym_pub: PublicKey,
    pub endorsement: Signature,
    /// Leaf first, root last.
    pub latchkeys: Vec<Latchkey>,
}

impl Capability {
    /// Slot named by the leaf latchkey; meaningful only for genuine capabilities.
    pub fn slot(&self) -> Option<u64> {
        self.latchkeys.first().map(|l| l.label.index)
    }
}

/// Latchkeys are produced on demand; nothing is cached on the pseudonym.
pub fn get_capability(rrp: &Rrp, slot: u64, cfg: &EpochConfig) -> Result<Capability, PseudonymError> {
    if rrp.epoch_id != cfg.epoch_id() {
        return Err(PseudonymError::EpochMismatch { pseudonym: rrp.epoch_id, tree: cfg.epoch_id() });
    }
    let latchkeys = path_to_root(cfg, slot)?.into_iter().map(|label| rrp.latchkey(label)).collect();
    Ok(Capability { epoch_id: rrp.epoch_id, pseudonym_pub: rrp.public(), endorsement: rrp.endorsement, latchkeys })
}

/// Genuineness only: PM endorsement, exact path for `expected_slot`, and every
/// latchkey signed by the pseudonym key. Revocation is a separate check.
pub fn verify_capability(cap: &Capability, pm_public: &PublicKey, expected_slot: u64, cfg: &EpochConfig) -> bool {
    if !structure_ok(cap, expected_slot, cfg) || !endorsement_ok(cap, pm_public) {
        return false;
    }
    cap.latchkeys.iter().all(|l| crypto::ver_sign(&cap.pseudonym_pub, &l.label.canonical_bytes(), &l.sig))
}

/// Same contract as [`verify_capability`]; the signature checks run on the
/// given rayon pool.
pub fn verify_capability_parallel(
    cap: &Capability,
    pm_public: &PublicKey,
    expected_slot: u64,
    cfg: &EpochConfig,
    pool: &rayon::ThreadPool,
) -> bool {
    if !structure_ok(cap, expected_slot, cfg) {
        return false;
    }
    pool.install(|| {
        let endorsed = || endorsement_ok(cap, pm_public);
        let latchkeys = || {
            cap.latchkeys
                .par_iter()
                .with_min_len(1)
                .all(|l| crypto::ver_sign(&cap.pseudonym_pub, &l.label.canonical_bytes(), &l.sig))
        };
        let (a, b) = rayon::join(endorsed, latchkeys);
        a && b
    })
}

fn structure_ok(cap: &Capability, expected_slot: u64, cfg: &EpochConfig) -> bool {
    if cap.epoch_id != cfg.epoch_id() {
        return false;
    }
    let Ok(path) = path_to_root(cfg, expected_slot) else { return false };
    cap.latchkeys.len() == path.len() && cap.latchkeys.iter().zip(&path).all(|(l, p)| l.label == *p)
}

pub(crate) fn endorsement_ok(cap: &Capability, pm_public: &PublicKey) -> bool {
    crypto::ver_sign(pm_public, &endorsement_message(cap.epoch_id, &cap.pseudonym_pub), &cap.endorsement)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::Seed;
    use rand::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn pm() -> KeyPair {
        det_key_gen(&Seed([0xAA; 32]))
    }

    fn fig3() -> EpochConfig {
        EpochConfig::new(0, 60, 15, 2).unwrap()
    }

    fn cid(n: u8) -> ClientId {
        ClientId([n; 32])
    }

    #[test]
    fn create_is_deterministic() {
        let a = create_rrp(cid(1), 0, 1, &pm(), 10).unwrap();
        let b = create_rrp(cid(1), 0, 1, &pm(), 10).unwrap();
        assert_eq!(a, b);
        assert!(a.endorsed_by(&pm().public()));
        let c = create_rrp(cid(1), 0, 2, &pm(), 10).unwrap();
        let d = create_rrp(cid(1), 1, 1, &pm(), 10).unwrap();
        assert_ne!(a.public(), c.public());
        assert_ne!(a.public(), d.public());
    }

    #[test]
    fn instance_bounds() {
        assert_eq!(
            create_rrp(cid(1), 0, 0, &pm(), 10),
            Err(PseudonymError::InstanceOutOfBounds { instance: 0, max: 10 })
        );
        assert!(create_rrp(cid(1), 0, 11, &pm(), 10).is_err());
        assert!(create_rrp(cid(1), 0, 10, &pm(), 10).is_ok());
    }

    #[test]
    fn from_endorsement_matches_pm_copy() {
        let issued = create_rrp(cid(4), 3, 2, &pm(), 5).unwrap();
        let rebuilt = Rrp::from_endorsement(cid(4), 3, 2, issued.endorsement);
        assert_eq!(issued, rebuilt);
    }

    #[test]
    fn figure3_capability() {
        let cfg = fig3();
        let rrp = create_rrp(cid(1), 0, 1, &pm(), 10).unwrap();
        let cap = get_capability(&rrp, 0, &cfg).unwrap();
        let names: Vec<String> = cap.latchkeys.iter().map(|l| l.label.notation(2)).collect();
        assert_eq!(names, vec!["e00", "e0", "e"]);
        assert_eq!(cap, get_capability(&rrp, 0, &cfg).unwrap());
        assert!(verify_capability(&cap, &pm().public(), 0, &cfg));
        assert!(!verify_capability(&cap, &pm().public(), 1, &cfg));

        // slots 0 and 1 share e0 and e: the reason one pseudonym must be used once
        let cap1 = get_capability(&rrp, 1, &cfg).unwrap();
        assert_eq!(cap.latchkeys[1], cap1.latchkeys[1]);
        assert_eq!(cap.latchkeys[2], cap1.latchkeys[2]);
        assert_ne!(cap.latchkeys[0].sig, cap1.latchkeys[0].sig);
        assert_eq!(cap.slot(), Some(0));
    }

    #[test]
    fn epoch_and_slot_mismatch() {
        let cfg = fig3();
        let rrp = create_rrp(cid(1), 1, 1, &pm(), 10).unwrap();
        assert!(matches!(get_capability(&rrp, 0, &cfg), Err(PseudonymError::EpochMismatch { .. })));
        let rrp = create_rrp(cid(1), 0, 1, &pm(), 10).unwrap();
        assert!(matches!(get_capability(&rrp, 4, &cfg), Err(PseudonymError::Tree(_))));
    }

    #[test]
    fn spliced_latchkey_rejected() {
        let cfg = fig3();
        let a = create_rrp(cid(1), 0, 1, &pm(), 10).unwrap();
        let b = create_rrp(cid(2), 0, 1, &pm(), 10).unwrap();
        let cap_b = get_capability(&b, 2, &cfg).unwrap();
        for i in 0..3 {
            let mut cap = get_capability(&a, 2, &cfg).unwrap();
            cap.latchkeys[i] = cap_b.latchkeys[i];
            assert!(!verify_capability(&cap, &pm().public(), 2, &cfg));
        }
    }

    #[test]
    fn unendorsed_pseudonym_rejected() {
        let cfg = fig3();
        let rogue_pm = det_key_gen(&Seed([0xBB; 32]));
        let rrp = create_rrp(cid(1), 0, 1, &rogue_pm, 10).unwrap();
        let cap = get_capability(&rrp, 0, &cfg).unwrap();
        assert!(!verify_capability(&cap, &pm().public(), 0, &cfg));
        // an epoch rewrite breaks the endorsement too
        let good = create_rrp(cid(1), 0, 1, &pm(), 10).unwrap();
        let mut cap = get_capability(&good, 0, &cfg).unwrap();
        cap.epoch_id = 1;
        assert!(!verify_capability(&cap, &pm().public(), 0, &cfg.with_epoch(1)));
    }

    #[test]
    fn forged_latchkeys_rejected() {
        // Without K_p⁻ a verifier can only guess signatures.
        let cfg = EpochConfig::new(0, 1440, 1, 2).unwrap();
        let rrp = create_rrp(cid(7), 0, 1, &pm(), 10).unwrap();
        let honest = get_capability(&rrp, 100, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..64 {
            let mut cap = honest.clone();
            let i = trial % cap.latchkeys.len();
            let mut forged = [0u8; 64];
            rng.fill_bytes(&mut forged);
            cap.latchkeys[i].sig = Signature(forged);
            assert!(!verify_capability(&cap, &pm().public(), 100, &cfg));
            // a latchkey copied from another label of the same pseudonym
            let mut cap = honest.clone();
            cap.latchkeys[i].sig = cap.latchkeys[(i + 1) % cap.latchkeys.len()].sig;
            assert!(!verify_capability(&cap, &pm().public(), 100, &cfg));
        }
    }

    #[test]
    fn truncated_path_rejected() {
        let cfg = fig3();
        let rrp = create_rrp(cid(1), 0, 1, &pm(), 10).unwrap();
        let mut cap = get_capability(&rrp, 0, &cfg).unwrap();
        cap.latchkeys.pop();
        assert!(!verify_capability(&cap, &pm().public(), 0, &cfg));
    }

    #[test]
    fn parallel_verification_agrees() {
        let cfg = EpochConfig::new(0, 1 << 16, 1, 2).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(2).build().unwrap();
        let rrp = create_rrp(cid(3), 0, 4, &pm(), 10).unwrap();
        let cap = get_capability(&rrp, 777, &cfg).unwrap();
        assert!(verify_capability_parallel(&cap, &pm().public(), 777, &cfg, &pool));
        assert!(!verify_capability_parallel(&cap, &pm().public(), 778, &cfg, &pool));
        let mut bad = cap.clone();
        bad.latchkeys[5].sig.0[0] ^= 1;
        assert!(!verify_capability_parallel(&bad, &pm().public(), 777, &cfg, &pool));
    }

    #[test]
    fn public_keys_of_client() {
        let keys = pseudonym_public_keys_of(&cid(9), 2, 10);
        assert_eq!(keys.len(), 10);
        assert_eq!(keys.iter().collect::<HashSet<_>>().len(), 10);
        let rrp = create_rrp(cid(9), 2, 7, &pm(), 10).unwrap();
        assert!(keys.contains(&rrp.public()));
    }

    #[test]
    fn client_key_lists_disjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let mut a = [0u8; 32];
            let mut b = [0u8; 32];
            rng.fill_bytes(&mut a);
            rng.fill_bytes(&mut b);
            let ka: HashSet<_> = pseudonym_public_keys_of(&ClientId(a), 0, 2).into_iter().collect();
            let kb = pseudonym_public_keys_of(&ClientId(b), 0, 2);
            assert!(kb.iter().all(|k| !ka.contains(k)));
        }
    }

    /// Byte-level disjointness of capabilities from distinct (cid, epoch, i).
    #[test]
    fn distinct_pseudonyms_share_no_field() {
        let cfg = EpochConfig::new(0, 64, 1, 2).unwrap();
        let triples = [(1u8, 0u64, 1u32), (1, 0, 2), (2, 0, 1), (1, 1, 1)];
        let caps: Vec<Capability> = triples
            .iter()
            .map(|&(c, e, i)| {
                let rrp = create_rrp(cid(c), e, i, &pm(), 4).unwrap();
                get_capability(&rrp, 10, &cfg.with_epoch(e)).unwrap()
            })
            .collect();
        for (i, a) in caps.iter().enumerate() {
            for b in &caps[i + 1..] {
                assert_ne!(a.pseudonym_pub, b.pseudonym_pub);
                assert_ne!(a.endorsement, b.endorsement);
                let sa: HashSet<_> = a.latchkeys.iter().map(|l| l.sig).collect();
                assert!(b.latchkeys.iter().all(|l| !sa.contains(&l.sig)));
            }
        }
    }

    #[test]
    fn capability_size_is_logarithmic() {
        let rrp = create_rrp(cid(1), 0, 1, &pm(), 1).unwrap();
        for (t, h) in [(144u64, 8usize), (1440, 11), (1 << 20, 20)] {
            let cfg = EpochConfig::new(0, t, 1, 2).unwrap();
            assert_eq!(get_capability(&rrp, t - 1, &cfg).unwrap().latchkeys.len(), h + 1);
        }
    }
}
