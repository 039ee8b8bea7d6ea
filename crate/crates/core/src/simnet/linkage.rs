//! Linking adversary: a coalition of verifiers pools its transcripts and
//! every published filter, then tries to tie presentations together.

use std::collections::{BTreeMap, BTreeSet};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::crypto::{PublicKey, Signature};
use crate::ercset::{ErcSet, RevocationSet};
use crate::verifier::TranscriptLine;

/// Two-sided p-value of the pooled two-proportion z-test.
pub fn two_proportion_p_value(hits_a: u64, n_a: u64, hits_b: u64, n_b: u64) -> f64 {
    if n_a == 0 || n_b == 0 {
        return 1.0;
    }
    let (pa, pb) = (hits_a as f64 / n_a as f64, hits_b as f64 / n_b as f64);
    let pooled = (hits_a + hits_b) as f64 / (n_a + n_b) as f64;
    let se = (pooled * (1.0 - pooled) * (1.0 / n_a as f64 + 1.0 / n_b as f64)).sqrt();
    if se == 0.0 {
        return if pa == pb { 1.0 } else { 0.0 };
    }
    let z = ((pa - pb) / se).abs();
    2.0 * (1.0 - Normal::standard().cdf(z))
}

/// Hit rate of a set of latchkeys against a filter, next to the hit rate of
/// uniformly random 64-byte strings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnlinkabilityTest {
    pub sample_hits: u64,
    pub samples: u64,
    pub random_hits: u64,
    pub randoms: u64,
    pub p_value: f64,
}

impl UnlinkabilityTest {
    pub fn sample_rate(&self) -> f64 {
        self.sample_hits as f64 / self.samples.max(1) as f64
    }

    pub fn random_rate(&self) -> f64 {
        self.random_hits as f64 / self.randoms.max(1) as f64
    }
}

pub fn unlinkability_test<S: RevocationSet + ?Sized>(
    filter: &S,
    samples: &[Signature],
    randoms: u64,
    seed: u64,
) -> UnlinkabilityTest {
    let sample_hits = samples.iter().filter(|s| filter.contains_latchkey(s)).count() as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut random_hits = 0;
    let mut buf = [0u8; 64];
    for _ in 0..randoms {
        rng.fill_bytes(&mut buf);
        random_hits += filter.contains_latchkey(&Signature(buf)) as u64;
    }
    let samples_n = samples.len() as u64;
    UnlinkabilityTest {
        sample_hits,
        samples: samples_n,
        random_hits,
        randoms,
        p_value: two_proportion_p_value(sample_hits, samples_n, random_hits, randoms),
    }
}

/// Ground truth the adversary does not have, used to score it.
#[derive(Debug, Clone, Default)]
pub struct GroundTruth {
    pub owner: BTreeMap<PublicKey, u32>,
    /// client → (epoch, first revoked slot, time the order was issued)
    pub revoked: BTreeMap<u32, (u64, u64, u64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkageStats {
    pub presentations: u64,
    pub pairs: u64,
    pub same_client_pairs: u64,
    /// Pairs tied by an identical pseudonym key.
    pub linked_by_key: u64,
    /// Pairs tied by a shared latchkey under different keys.
    pub linked_by_latchkey: u64,
    /// Pairs whose presentations both hit the published filters.
    pub linked_by_hits: u64,
    pub false_links: u64,
    /// Distinct pseudonyms of one client that the adversary tied together.
    pub cross_pseudonym_links: u64,
    pub pre_revocation: Option<UnlinkabilityTest>,
}

impl LinkageStats {
    pub fn success_rate(&self) -> f64 {
        let linked = self.linked_by_key + self.linked_by_latchkey;
        linked as f64 / self.same_client_pairs.max(1) as f64
    }
}

/// Presentation is "hit" when any of its latchkeys is in the filter for its
/// epoch.
fn hit(line: &TranscriptLine, filters: &BTreeMap<u64, ErcSet>) -> bool {
    filters
        .get(&line.capability.epoch_id)
        .is_some_and(|f| line.capability.latchkeys.iter().any(|l| f.filter.contains_latchkey(&l.sig)))
}

pub fn inject_linkage_adversary(
    transcripts: &[TranscriptLine],
    filters: &BTreeMap<u64, ErcSet>,
    truth: &GroundTruth,
    randoms: u64,
    seed: u64,
) -> LinkageStats {
    let n = transcripts.len();
    let hits: Vec<bool> = transcripts.iter().map(|l| hit(l, filters)).collect();
    let sigs: Vec<BTreeSet<Signature>> =
        transcripts.iter().map(|l| l.capability.latchkeys.iter().map(|k| k.sig).collect()).collect();
    let owner = |l: &TranscriptLine| truth.owner.get(&l.pseudonym_pub).copied();
    let mut s = LinkageStats {
        presentations: n as u64,
        pairs: 0,
        same_client_pairs: 0,
        linked_by_key: 0,
        linked_by_latchkey: 0,
        linked_by_hits: 0,
        false_links: 0,
        cross_pseudonym_links: 0,
        pre_revocation: None,
    };
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (&transcripts[i], &transcripts[j]);
            s.pairs += 1;
            let same = owner(a).is_some() && owner(a) == owner(b);
            s.same_client_pairs += same as u64;
            let by_key = a.pseudonym_pub == b.pseudonym_pub;
            let by_latchkey = !by_key && !sigs[i].is_disjoint(&sigs[j]);
            let by_hits = hits[i] && hits[j];
            s.linked_by_key += by_key as u64;
            s.linked_by_latchkey += by_latchkey as u64;
            s.linked_by_hits += by_hits as u64;
            if (by_key || by_latchkey) && !same {
                s.false_links += 1;
            }
            if by_latchkey && same {
                s.cross_pseudonym_links += 1;
            }
        }
    }

    // latchkeys a revoked client showed before its revocation slot
    let mut pre: Vec<Signature> = Vec::new();
    for line in transcripts {
        let Some(client) = owner(line) else { continue };
        let Some(&(epoch, rts, _)) = truth.revoked.get(&client) else { continue };
        if line.capability.epoch_id == epoch && line.slot.is_some_and(|s| s < rts) {
            pre.extend(line.capability.latchkeys.iter().map(|l| l.sig));
        }
    }
    pre.sort();
    pre.dedup();
    if let (false, Some(f)) = (pre.is_empty(), truth.revoked.values().next().and_then(|(e, _, _)| filters.get(e))) {
        s.pre_revocation = Some(unlinkability_test(&f.filter, &pre, randoms, seed));
    }
    s
}
