//! Encoded revoked-capability sets.
//!
//! Construction follows four steps: merge the latchkeys of the revoked
//! capabilities, drop every latchkey whose subtree reaches a slot that was not
//! revoked, drop latchkeys already covered by their parent, and insert the
//! digests of what remains into a Bloom filter.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use thiserror::Error;

use crate::crypto::{digest, digest_parts, PublicKey, Seed, Signature};
use crate::pseudonym::{Capability, Latchkey};
use crate::slot_tree::{parent_label, EpochConfig, NodeLabel};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ErcError {
    #[error("capabilities come from different pseudonyms or epochs")]
    MixedPseudonyms,
    #[error("two different latchkeys for label {0}")]
    ConflictingLatchkey(NodeLabel),
    #[error("filter parameters differ (m, k, epoch or salt)")]
    ParamMismatch,
    #[error("filter needs m >= 8 bits and k >= 1, got m={m} k={k}")]
    BadParams { m: u64, k: u8 },
}

/// Filter shape: `m` bits and `k` index functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FilterParams {
    pub m: u64,
    pub k: u8,
}

impl FilterParams {
    pub fn new(m: u64, k: u8) -> Result<Self, ErcError> {
        if m < 8 || k == 0 {
            return Err(ErcError::BadParams { m, k });
        }
        Ok(FilterParams { m, k })
    }

    /// Bits rounded to whole bytes and `k = round(m/n · ln 2)`, at least 1.
    pub fn for_items(m: u64, n: f64) -> Result<Self, ErcError> {
        let m = m.div_ceil(8) * 8;
        let k = if n <= 0.0 { 1.0 } else { ((m as f64 / n) * std::f64::consts::LN_2).round() };
        Self::new(m, k.clamp(1.0, u8::MAX as f64) as u8)
    }
}

pub const SALT_LEN: usize = 16;

/// Salt shared by every party for one epoch, so independently built filters
/// index identically and can be OR-merged.
pub fn epoch_salt(epoch_id: u64) -> [u8; SALT_LEN] {
    let d = digest_parts(&[b"ERCS-salt", &epoch_id.to_be_bytes()]);
    let mut salt = [0u8; SALT_LEN];
    salt.copy_from_slice(&d.0[..SALT_LEN]);
    salt
}

/// Plain Bloom filter over byte strings with double-hashed indices.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BloomFilter {
    m: u64,
    k: u8,
    epoch_id: u64,
    salt: [u8; SALT_LEN],
    bits: Vec<u8>,
}

impl std::fmt::Debug for BloomFilter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BloomFilter")
            .field("m", &self.m)
            .field("k", &self.k)
            .field("epoch_id", &self.epoch_id)
            .field("ones", &self.count_ones())
            .finish()
    }
}

impl BloomFilter {
    pub fn new(params: FilterParams, epoch_id: u64) -> Self {
        Self::with_salt(params, epoch_id, epoch_salt(epoch_id))
    }

    pub fn with_salt(params: FilterParams, epoch_id: u64, salt: [u8; SALT_LEN]) -> Self {
        BloomFilter { m: params.m, k: params.k, epoch_id, salt, bits: vec![0u8; params.m.div_ceil(8) as usize] }
    }

    /// Rebuilds a filter from decoded parts; bits beyond `m` must be clear.
    pub fn from_parts(params: FilterParams, epoch_id: u64, salt: [u8; SALT_LEN], bits: Vec<u8>) -> Option<Self> {
        if bits.len() as u64 != params.m.div_ceil(8) {
            return None;
        }
        let f = BloomFilter { m: params.m, k: params.k, epoch_id, salt, bits };
        let tail = f.m % 8;
        if tail != 0 && f.bits.last().is_some_and(|b| b >> tail != 0) {
            return None;
        }
        Some(f)
    }

    pub fn params(&self) -> FilterParams {
        FilterParams { m: self.m, k: self.k }
    }

    pub fn epoch_id(&self) -> u64 {
        self.epoch_id
    }

    pub fn salt(&self) -> &[u8; SALT_LEN] {
        &self.salt
    }

    /// Bit `i` lives in byte `i / 8` under mask `1 << (i % 8)`.
    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    fn indices(&self, item: &[u8]) -> impl Iterator<Item = u64> {
        let d = digest_parts(&[item, &self.salt]);
        let g1 = u64::from_be_bytes(d.0[..8].try_into().unwrap()) as u128;
        let g2 = u64::from_be_bytes(d.0[8..16].try_into().unwrap()) as u128;
        let m = self.m as u128;
        (0..self.k as u128).map(move |j| ((g1 + j * g2) % m) as u64)
    }

    pub fn insert(&mut self, item: &[u8]) {
        let idx: Vec<u64> = self.indices(item).collect();
        for i in idx {
            self.bits[(i / 8) as usize] |= 1 << (i % 8);
        }
    }

    pub fn contains(&self, item: &[u8]) -> bool {
        self.indices(item).all(|i| self.bits[(i / 8) as usize] & (1 << (i % 8)) != 0)
    }

    pub fn compatible(&self, other: &BloomFilter) -> bool {
        self.m == other.m && self.k == other.k && self.epoch_id == other.epoch_id && self.salt == other.salt
    }

    /// In-place OR; returns whether any bit changed.
    pub fn union_with(&mut self, other: &BloomFilter) -> Result<bool, ErcError> {
        if !self.compatible(other) {
            return Err(ErcError::ParamMismatch);
        }
        let mut changed = false;
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            let merged = *a | *b;
            changed |= merged != *a;
            *a = merged;
        }
        Ok(changed)
    }

    /// Every bit set here is also set in `other`.
    pub fn is_subset_of(&self, other: &BloomFilter) -> bool {
        self.compatible(other) && self.bits.iter().zip(&other.bits).all(|(a, b)| a & !b == 0)
    }

    pub fn count_ones(&self) -> u64 {
        self.bits.iter().map(|b| b.count_ones() as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|b| *b == 0)
    }
}

/// Anything a revoked latchkey can be encoded into and later tested against.
///
/// Only digests of latchkey signatures reach an implementation; raw latchkeys
/// never do.
pub trait RevocationSet {
    fn insert_latchkey(&mut self, sig: &Signature);
    fn contains_latchkey(&self, sig: &Signature) -> bool;
}

fn latchkey_digest(sig: &Signature) -> Seed {
    digest(sig.as_bytes())
}

impl RevocationSet for BloomFilter {
    fn insert_latchkey(&mut self, sig: &Signature) {
        self.insert(&latchkey_digest(sig).0);
    }

    fn contains_latchkey(&self, sig: &Signature) -> bool {
        self.contains(&latchkey_digest(sig).0)
    }
}

/// Exact digest set with no false positives; the reference stand-in for a
/// Bloom filter in oracles and simulations.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExactDigestSet {
    digests: HashSet<Seed>,
}

impl ExactDigestSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.digests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.digests.is_empty()
    }

    pub fn merge(&mut self, other: &ExactDigestSet) {
        self.digests.extend(other.digests.iter().copied());
    }
}

impl RevocationSet for ExactDigestSet {
    fn insert_latchkey(&mut self, sig: &Signature) {
        self.digests.insert(latchkey_digest(sig));
    }

    fn contains_latchkey(&self, sig: &Signature) -> bool {
        self.digests.contains(&latchkey_digest(sig))
    }
}

/// Deduplicated latchkeys of one pseudonym, keyed by label.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LatchkeySet {
    owner: Option<(PublicKey, u64)>,
    latchkeys: BTreeMap<NodeLabel, Signature>,
}

impl LatchkeySet {
    pub fn len(&self) -> usize {
        self.latchkeys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.latchkeys.is_empty()
    }

    pub fn labels(&self) -> BTreeSet<NodeLabel> {
        self.latchkeys.keys().copied().collect()
    }

    pub fn contains_label(&self, label: &NodeLabel) -> bool {
        self.latchkeys.contains_key(label)
    }

    pub fn iter(&self) -> impl Iterator<Item = Latchkey> + '_ {
        self.latchkeys.iter().map(|(label, sig)| Latchkey { label: *label, sig: *sig })
    }

    fn retain(&self, keep: impl Fn(&NodeLabel) -> bool) -> LatchkeySet {
        LatchkeySet {
            owner: self.owner,
            latchkeys: self.latchkeys.iter().filter(|(l, _)| keep(l)).map(|(l, s)| (*l, *s)).collect(),
        }
    }
}

/// Union of the latchkeys of capabilities that all belong to one pseudonym.
pub fn merge_latchkeys<'a>(caps: impl IntoIterator<Item = &'a Capability>) -> Result<LatchkeySet, ErcError> {
    let mut set = LatchkeySet::default();
    for cap in caps {
        let owner = (cap.pseudonym_pub, cap.epoch_id);
        match set.owner {
            None => set.owner = Some(owner),
            Some(o) if o != owner => return Err(ErcError::MixedPseudonyms),
            _ => {}
        }
        for l in &cap.latchkeys {
            match set.latchkeys.insert(l.label, l.sig) {
                Some(prev) if prev != l.sig => return Err(ErcError::ConflictingLatchkey(l.label)),
                _ => {}
            }
        }
    }
    Ok(set)
}

/// Keeps a latchkey only when every real leaf below its node has its own
/// latchkey in the set. The output is the `Safe` set.
pub fn remove_unsafe(set: &LatchkeySet, cfg: &EpochConfig) -> LatchkeySet {
    let leaves: BTreeSet<u64> =
        set.latchkeys.keys().filter(|l| l.level == cfg.height() && cfg.contains(l)).map(|l| l.index).collect();
    set.retain(|label| match cfg.leaf_range(label) {
        Some(r) => leaves.range(r.first..=r.last).count() as u64 == r.len(),
        None => false,
    })
}

/// Drops latchkeys whose parent latchkey is also present.
pub fn remove_redundant(set: &LatchkeySet, cfg: &EpochConfig) -> LatchkeySet {
    set.retain(|label| parent_label(cfg, label).is_none_or(|p| !set.contains_label(&p)))
}

pub fn latchkeys_encoding<S: RevocationSet>(set: &LatchkeySet, mut target: S) -> S {
    for l in set.iter() {
        target.insert_latchkey(&l.sig);
    }
    target
}

/// The full pipeline into an arbitrary revocation encoding.
pub fn encode_revocation<'a, S: RevocationSet>(
    caps: impl IntoIterator<Item = &'a Capability>,
    cfg: &EpochConfig,
    target: S,
) -> Result<S, ErcError> {
    let unfiltered = merge_latchkeys(caps)?;
    let safe = remove_unsafe(&unfiltered, cfg);
    let minimal = remove_redundant(&safe, cfg);
    Ok(latchkeys_encoding(&minimal, target))
}

/// Bloom-filter ERCSet for one epoch.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ErcSet {
    pub filter: BloomFilter,
}

impl ErcSet {
    pub fn empty(params: FilterParams, epoch_id: u64) -> Self {
        ErcSet { filter: BloomFilter::new(params, epoch_id) }
    }

    pub fn epoch_id(&self) -> u64 {
        self.filter.epoch_id()
    }

    pub fn params(&self) -> FilterParams {
        self.filter.params()
    }

    /// OR-merge in place; returns whether anything changed.
    pub fn absorb(&mut self, other: &ErcSet) -> Result<bool, ErcError> {
        self.filter.union_with(&other.filter)
    }
}

pub fn create_erc_set<'a>(
    caps: impl IntoIterator<Item = &'a Capability>,
    cfg: &EpochConfig,
    params: FilterParams,
) -> Result<ErcSet, ErcError> {
    let filter = encode_revocation(caps, cfg, BloomFilter::new(params, cfg.epoch_id()))?;
    Ok(ErcSet { filter })
}

pub fn merge_erc_set(a: &ErcSet, b: &ErcSet) -> Result<ErcSet, ErcError> {
    let mut out = a.clone();
    out.absorb(b)?;
    Ok(out)
}

/// Revoked as soon as a single latchkey of the capability is in the set.
pub fn is_revoked<S: RevocationSet + ?Sized>(set: &S, cap: &Capability) -> bool {
    cap.latchkeys.iter().any(|l| set.contains_latchkey(&l.sig))
}

pub fn is_revoked_erc(erc: &ErcSet, cap: &Capability) -> bool {
    is_revoked(&erc.filter, cap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{det_key_gen, KeyPair};
    use crate::pseudonym::{create_rrp, get_capability, ClientId, Rrp};
    use crate::slot_tree::{path_to_root, safe_cover, SlotRange};
    use rand::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pm() -> KeyPair {
        det_key_gen(&Seed([0xAA; 32]))
    }

    fn fig3() -> EpochConfig {
        EpochConfig::new(0, 60, 15, 2).unwrap()
    }

    fn rrp(c: u8, epoch: u64) -> Rrp {
        create_rrp(ClientId([c; 32]), epoch, 1, &pm(), 4).unwrap()
    }

    fn caps(r: &Rrp, cfg: &EpochConfig, slots: impl IntoIterator<Item = u64>) -> Vec<Capability> {
        slots.into_iter().map(|s| get_capability(r, s, cfg).unwrap()).collect()
    }

    fn names(set: &LatchkeySet) -> Vec<String> {
        let mut v: Vec<String> = set.labels().iter().map(|l| l.notation(2)).collect();
        v.sort();
        v
    }

    /// Large enough that the false-positive probability is negligible here.
    fn big() -> FilterParams {
        FilterParams::new(1 << 20, 20).unwrap()
    }

    #[test]
    fn merge_latchkeys_figure3() {
        let cfg = fig3();
        let r = rrp(1, 0);
        let set = merge_latchkeys(&caps(&r, &cfg, 1..=3)).unwrap();
        assert_eq!(names(&set), vec!["e", "e0", "e01", "e1", "e10", "e11"]);
        let one = merge_latchkeys(&caps(&r, &cfg, [0])).unwrap();
        assert_eq!(one.len(), 3);
        let twice = merge_latchkeys(&caps(&r, &cfg, [0, 0])).unwrap();
        assert_eq!(one, twice);
        assert!(merge_latchkeys(std::iter::empty()).unwrap().is_empty());
    }

    #[test]
    fn merge_latchkeys_rejects_mixed() {
        let cfg = fig3();
        let mut all = caps(&rrp(1, 0), &cfg, [0]);
        all.extend(caps(&rrp(2, 0), &cfg, [1]));
        assert_eq!(merge_latchkeys(&all), Err(ErcError::MixedPseudonyms));

        let mut forged = caps(&rrp(1, 0), &cfg, [0, 1]);
        forged[1].latchkeys[1].sig.0[0] ^= 1;
        assert!(matches!(merge_latchkeys(&forged), Err(ErcError::ConflictingLatchkey(_))));
    }

    #[test]
    fn remove_unsafe_figure3() {
        let cfg = fig3();
        let r = rrp(1, 0);
        let safe = remove_unsafe(&merge_latchkeys(&caps(&r, &cfg, 1..=3)).unwrap(), &cfg);
        assert_eq!(names(&safe), vec!["e01", "e1", "e10", "e11"]);
        let safe = remove_unsafe(&merge_latchkeys(&caps(&r, &cfg, 0..=3)).unwrap(), &cfg);
        assert_eq!(safe.len(), 7);
        let safe = remove_unsafe(&merge_latchkeys(&caps(&r, &cfg, [0])).unwrap(), &cfg);
        assert_eq!(names(&safe), vec!["e00"]);
    }

    #[test]
    fn remove_redundant_figure3() {
        let cfg = fig3();
        let r = rrp(1, 0);
        let red = |slots: Vec<u64>| {
            let safe = remove_unsafe(&merge_latchkeys(&caps(&r, &cfg, slots)).unwrap(), &cfg);
            names(&remove_redundant(&safe, &cfg))
        };
        assert_eq!(red(vec![1, 2, 3]), vec!["e01", "e1"]);
        assert_eq!(red(vec![0, 1, 2, 3]), vec!["e"]);
        assert_eq!(red(vec![0]), vec!["e00"]);
    }

    #[test]
    fn create_figure3_encodes_exactly_cover() {
        let cfg = fig3();
        let r = rrp(1, 0);
        let exact = encode_revocation(&caps(&r, &cfg, 1..=3), &cfg, ExactDigestSet::new()).unwrap();
        assert_eq!(exact.len(), 2);
        let expected: Vec<Signature> = ["e01", "e1"]
            .iter()
            .map(|n| {
                let lbl = match *n {
                    "e01" => NodeLabel { epoch_id: 0, level: 2, index: 1 },
                    _ => NodeLabel { epoch_id: 0, level: 1, index: 1 },
                };
                r.latchkey(lbl).sig
            })
            .collect();
        for sig in &expected {
            assert!(exact.contains_latchkey(sig));
        }
        let full = encode_revocation(&caps(&r, &cfg, 0..=3), &cfg, ExactDigestSet::new()).unwrap();
        assert_eq!(full.len(), 1);
        assert!(full.contains_latchkey(&r.latchkey(cfg.root()).sig));

        let erc = create_erc_set(&caps(&r, &cfg, 1..=3), &cfg, big()).unwrap();
        let manual = latchkeys_encoding(
            &remove_redundant(&remove_unsafe(&merge_latchkeys(&caps(&r, &cfg, 1..=3)).unwrap(), &cfg), &cfg),
            BloomFilter::new(big(), 0),
        );
        assert_eq!(erc.filter, manual);
        let empty = create_erc_set(std::iter::empty(), &cfg, big()).unwrap();
        assert!(empty.filter.is_empty());
    }

    #[test]
    fn is_revoked_figure3() {
        let cfg = fig3();
        let r = rrp(1, 0);
        let erc = create_erc_set(&caps(&r, &cfg, 1..=3), &cfg, big()).unwrap();
        assert!(is_revoked_erc(&erc, &get_capability(&r, 2, &cfg).unwrap()));
        assert!(is_revoked_erc(&erc, &get_capability(&r, 1, &cfg).unwrap()));
        assert!(!is_revoked_erc(&erc, &get_capability(&r, 0, &cfg).unwrap()));
        let empty = ErcSet::empty(big(), 0);
        assert!(!is_revoked_erc(&empty, &get_capability(&r, 2, &cfg).unwrap()));
        // another pseudonym is untouched
        assert!(!is_revoked_erc(&erc, &get_capability(&rrp(2, 0), 3, &cfg).unwrap()));
    }

    #[test]
    fn encoding_single_latchkey() {
        let cfg = fig3();
        let r = rrp(1, 0);
        let mut f = BloomFilter::new(FilterParams::new(4096, 5).unwrap(), 0);
        let l = r.latchkey(cfg.root());
        f.insert_latchkey(&l.sig);
        assert!(f.count_ones() >= 1 && f.count_ones() <= 5);
        assert!(f.contains_latchkey(&l.sig));
    }

    #[test]
    fn merge_laws() {
        let cfg = fig3();
        let a = create_erc_set(&caps(&rrp(1, 0), &cfg, 1..=3), &cfg, big()).unwrap();
        let b = create_erc_set(&caps(&rrp(2, 0), &cfg, [2, 3]), &cfg, big()).unwrap();
        let empty = ErcSet::empty(big(), 0);
        assert_eq!(merge_erc_set(&a, &empty).unwrap(), a);
        assert_eq!(merge_erc_set(&a, &b).unwrap(), merge_erc_set(&b, &a).unwrap());
        assert_eq!(merge_erc_set(&a, &a).unwrap(), a);
        let ab = merge_erc_set(&a, &b).unwrap();
        assert!(a.filter.is_subset_of(&ab.filter) && b.filter.is_subset_of(&ab.filter));
        assert!(is_revoked_erc(&ab, &get_capability(&rrp(2, 0), 3, &cfg).unwrap()));

        let other_epoch = ErcSet::empty(big(), 1);
        assert_eq!(merge_erc_set(&a, &other_epoch), Err(ErcError::ParamMismatch));
        let other_m = ErcSet::empty(FilterParams::new(1 << 19, 20).unwrap(), 0);
        assert_eq!(merge_erc_set(&a, &other_m), Err(ErcError::ParamMismatch));
    }

    #[test]
    fn params_validation() {
        assert!(FilterParams::new(7, 1).is_err());
        assert!(FilterParams::new(8, 0).is_err());
        let p = FilterParams::for_items(9 * 8192, 4911.0).unwrap();
        assert_eq!(p.k, 10);
        assert_eq!(FilterParams::for_items(100, 0.0).unwrap().k, 1);
        assert_eq!(FilterParams::for_items(100, 0.0).unwrap().m, 104);
    }

    #[test]
    fn from_parts_rejects_dirty_tail() {
        let p = FilterParams::new(12, 1).unwrap();
        assert!(BloomFilter::from_parts(p, 0, epoch_salt(0), vec![0, 0x0f]).is_some());
        assert!(BloomFilter::from_parts(p, 0, epoch_salt(0), vec![0, 0x10]).is_none());
        assert!(BloomFilter::from_parts(p, 0, epoch_salt(0), vec![0]).is_none());
    }

    /// Exhaustive revocation oracle with exact sets, plus the MayHaveBeenUsed
    /// disjointness check, over every contiguous range.
    #[test]
    fn exhaustive_ranges_exact_set() {
        for d in [2u32, 3] {
            for t in 1..=20u64 {
                let cfg = EpochConfig::new(0, t, 1, d).unwrap();
                let r = rrp(3, 0);
                let all: Vec<Capability> = caps(&r, &cfg, 0..t);
                for first in 0..t {
                    for last in first..t {
                        let range = SlotRange::new(&cfg, first, last).unwrap();
                        let revoked: Vec<&Capability> = all[first as usize..=last as usize].iter().collect();
                        let unfiltered = merge_latchkeys(revoked.iter().copied()).unwrap();
                        let safe = remove_unsafe(&unfiltered, &cfg);
                        let minimal = remove_redundant(&safe, &cfg);
                        assert_eq!(minimal.labels(), safe_cover(&cfg, &range).unwrap());
                        // two partial sides per level; equals d * height for binary trees
                        assert!(minimal.len() <= 2 * (d as usize - 1) * (cfg.height() as usize).max(1));
                        let set = latchkeys_encoding(&minimal, ExactDigestSet::new());
                        let may_have_been_used: HashSet<Signature> = all
                            .iter()
                            .enumerate()
                            .filter(|(s, _)| !range.contains(*s as u64))
                            .flat_map(|(_, c)| c.latchkeys.iter().map(|l| l.sig))
                            .collect();
                        assert!(safe.iter().all(|l| !may_have_been_used.contains(&l.sig)));
                        for (s, cap) in all.iter().enumerate() {
                            assert_eq!(is_revoked(&set, cap), range.contains(s as u64));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn non_path_closed_input_is_safe() {
        // Only leaves given, no inner latchkeys: nothing gets promoted to a parent.
        let cfg = fig3();
        let r = rrp(1, 0);
        let mut caps3 = caps(&r, &cfg, [2, 3]);
        for c in caps3.iter_mut() {
            c.latchkeys.truncate(1);
        }
        let safe = remove_unsafe(&merge_latchkeys(&caps3).unwrap(), &cfg);
        assert_eq!(names(&safe), vec!["e10", "e11"]);
        // root alone with no leaves is unsafe
        let full = caps(&r, &cfg, [0]);
        let root_only = Capability { latchkeys: vec![full[0].latchkeys[2]], ..full[0].clone() };
        assert!(remove_unsafe(&merge_latchkeys([&root_only]).unwrap(), &cfg).is_empty());
        let _ = path_to_root(&cfg, 0);
    }

    #[test]
    fn bloom_no_false_negatives() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut f = BloomFilter::new(FilterParams::new(2000, 4).unwrap(), 3);
        let mut items = Vec::new();
        for _ in 0..500 {
            let mut x = [0u8; 64];
            rng.fill_bytes(&mut x);
            f.insert(&x);
            items.push(x);
        }
        assert!(items.iter().all(|x| f.contains(x)));
    }

    proptest::proptest! {
        #[test]
        fn or_merge_preserves_membership(xs in proptest::collection::vec(proptest::array::uniform32(0u8..), 0..40), ys in proptest::collection::vec(proptest::array::uniform32(0u8..), 0..40)) {
            let p = FilterParams::new(512, 3).unwrap();
            let mut a = BloomFilter::new(p, 9);
            let mut b = BloomFilter::new(p, 9);
            for x in &xs { a.insert(x); }
            for y in &ys { b.insert(y); }
            let mut ab = a.clone();
            ab.union_with(&b).unwrap();
            for x in xs.iter().chain(&ys) { proptest::prop_assert!(ab.contains(x)); }
            let mut again = ab.clone();
            proptest::prop_assert!(!again.union_with(&a).unwrap());
        }
    }
}
