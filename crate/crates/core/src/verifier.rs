//! Verifier node: genuineness and revocation checks on presented
//! capabilities, periodic filter pulls, and safe-mode when the local filter
//! goes stale.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::clock::Timebase;
use crate::crypto::PublicKey;
use crate::ercset::{is_revoked_erc, ErcSet, FilterParams};
use crate::pseudonym::{get_capability, verify_capability, Capability, Rrp};
use crate::wire::{Addr, AuthResponse, FilterBundle, Message, Outgoing};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AuthDenial {
    StaleState,
    WrongEpoch,
    WrongSlot,
    NotGenuine,
    Revoked,
}

impl AuthDenial {
    pub fn as_str(self) -> &'static str {
        match self {
            AuthDenial::StaleState => "stale-state",
            AuthDenial::WrongEpoch => "wrong-epoch",
            AuthDenial::WrongSlot => "wrong-slot",
            AuthDenial::NotGenuine => "not-genuine",
            AuthDenial::Revoked => "revoked",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    Granted,
    Denied(AuthDenial),
}

impl Decision {
    pub fn code(self) -> u8 {
        match self {
            Decision::Granted => 0,
            Decision::Denied(AuthDenial::StaleState) => 1,
            Decision::Denied(AuthDenial::WrongEpoch) => 2,
            Decision::Denied(AuthDenial::WrongSlot) => 3,
            Decision::Denied(AuthDenial::NotGenuine) => 4,
            Decision::Denied(AuthDenial::Revoked) => 5,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => Decision::Granted,
            1 => Decision::Denied(AuthDenial::StaleState),
            2 => Decision::Denied(AuthDenial::WrongEpoch),
            3 => Decision::Denied(AuthDenial::WrongSlot),
            4 => Decision::Denied(AuthDenial::NotGenuine),
            5 => Decision::Denied(AuthDenial::Revoked),
            _ => return None,
        })
    }

    pub fn is_granted(self) -> bool {
        self == Decision::Granted
    }
}

/// One authentication attempt as the verifier saw it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptLine {
    pub at: u64,
    pub pseudonym_pub: PublicKey,
    pub slot: Option<u64>,
    pub decision: Decision,
    /// Full capability; kept for the linkage analysis.
    pub capability: Capability,
}

impl std::fmt::Display for TranscriptLine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let slot = self.slot.map_or_else(|| "-".to_string(), |s| s.to_string());
        let (decision, reason) = match self.decision {
            Decision::Granted => ("granted", "-"),
            Decision::Denied(r) => ("denied", r.as_str()),
        };
        write!(f, "{} {} {} {} {}", self.at, self.pseudonym_pub.to_hex(), slot, decision, reason)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifierConfig {
    pub pm_public: PublicKey,
    pub pm_count: u32,
    pub pull_period: u64,
    pub staleness_limit: u64,
    pub epsilon: u64,
    /// Also pull the next epoch's filter ahead of rollover.
    pub prefetch: bool,
    pub params: FilterParams,
}

impl VerifierConfig {
    pub fn default_staleness(pull_period: u64) -> u64 {
        3 * pull_period
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifierMode {
    Serving,
    Safe,
}

#[derive(Debug, Clone)]
pub struct VerifierNode {
    pub id: u32,
    cfg: VerifierConfig,
    timebase: Timebase,
    erc_local: Option<ErcSet>,
    prefetched: Option<ErcSet>,
    last_pull: Option<u64>,
    next_pull: u64,
    rng: ChaCha8Rng,
    pub transcript: Vec<TranscriptLine>,
}

impl VerifierNode {
    pub fn new(id: u32, cfg: VerifierConfig, timebase: Timebase, seed: u64) -> Self {
        VerifierNode {
            id,
            cfg,
            timebase,
            erc_local: None,
            prefetched: None,
            last_pull: None,
            next_pull: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            transcript: Vec::new(),
        }
    }

    pub fn config(&self) -> &VerifierConfig {
        &self.cfg
    }

    pub fn erc_local(&self) -> Option<&ErcSet> {
        self.erc_local.as_ref()
    }

    pub fn last_pull(&self) -> Option<u64> {
        self.last_pull
    }

    pub fn mode(&self, now: u64) -> VerifierMode {
        match self.last_pull {
            Some(t) if now.saturating_sub(t) <= self.cfg.staleness_limit => VerifierMode::Serving,
            _ => VerifierMode::Safe,
        }
    }

    /// Pure decision: depends only on local filter, capability, clock and mode.
    pub fn decide(&self, cap: &Capability, now: u64) -> Decision {
        let epoch = self.timebase.epoch_at(now);
        let Some(erc) = self.erc_local.as_ref().filter(|e| e.epoch_id() == epoch) else {
            return Decision::Denied(AuthDenial::StaleState);
        };
        if self.mode(now) == VerifierMode::Safe {
            return Decision::Denied(AuthDenial::StaleState);
        }
        if cap.epoch_id != epoch {
            return Decision::Denied(AuthDenial::WrongEpoch);
        }
        let Some(slot) = cap.slot() else {
            return Decision::Denied(AuthDenial::NotGenuine);
        };
        if !self.timebase.within_slot(epoch, slot, now, self.cfg.epsilon) {
            return Decision::Denied(AuthDenial::WrongSlot);
        }
        if !self.timebase.within_slot(epoch, slot, now, 0) {
            log::debug!("v{} accepted slot {slot} at {now} inside the skew margin", self.id);
        }
        if !verify_capability(cap, &self.cfg.pm_public, slot, &self.timebase.config(epoch)) {
            return Decision::Denied(AuthDenial::NotGenuine);
        }
        if is_revoked_erc(erc, cap) {
            return Decision::Denied(AuthDenial::Revoked);
        }
        Decision::Granted
    }

    pub fn authenticate(&mut self, cap: &Capability, now: u64) -> Decision {
        let decision = self.decide(cap, now);
        self.transcript.push(TranscriptLine {
            at: now,
            pseudonym_pub: cap.pseudonym_pub,
            slot: cap.slot(),
            decision,
            capability: cap.clone(),
        });
        decision
    }

    pub fn handle(&mut self, from: Addr, msg: Message, now: u64) -> Vec<Outgoing> {
        match msg {
            Message::AuthRequest(cap) => {
                let decision = self.authenticate(&cap, now);
                let resp = AuthResponse { pseudonym_pub: cap.pseudonym_pub, decision };
                vec![Outgoing { to: from, msg: Message::AuthResponse(resp) }]
            }
            Message::ErcPullResp(bundle) => {
                self.on_pull_response(&bundle, now);
                Vec::new()
            }
            _ => Vec::new(),
        }
    }

    /// Rollover bookkeeping and the periodic pull.
    pub fn on_tick(&mut self, now: u64) -> Vec<Outgoing> {
        let epoch = self.timebase.epoch_at(now);
        let mut out = Vec::new();
        if self.erc_local.as_ref().is_some_and(|e| e.epoch_id() != epoch) {
            self.erc_local = self.prefetched.take().filter(|e| e.epoch_id() == epoch);
            if self.erc_local.is_none() {
                // nothing usable for the new epoch: pull right away
                self.next_pull = now;
            }
        }
        if now >= self.next_pull {
            self.next_pull = now + self.cfg.pull_period;
            let pm = self.rng.gen_range(0..self.cfg.pm_count);
            out.push(Outgoing { to: Addr::Pm(pm), msg: Message::ErcPullReq { clock_epoch: epoch } });
        }
        out
    }

    /// Merges the filter for the current epoch; only that counts as a
    /// successful pull.
    pub fn on_pull_response(&mut self, bundle: &FilterBundle, now: u64) -> bool {
        let epoch = self.timebase.epoch_at(now);
        if self.cfg.prefetch {
            if let Some(next) = bundle.filter_for(epoch + 1) {
                merge_into(&mut self.prefetched, next);
            }
        }
        let Some(cur) = bundle.filter_for(epoch) else {
            return false;
        };
        if cur.params() != self.cfg.params {
            log::warn!("v{} ignored a filter with foreign parameters", self.id);
            return false;
        }
        if self.erc_local.as_ref().is_some_and(|e| e.epoch_id() != epoch) {
            self.erc_local = None;
        }
        merge_into(&mut self.erc_local, cur);
        self.last_pull = Some(now);
        true
    }
}

fn merge_into(slot: &mut Option<ErcSet>, incoming: &ErcSet) {
    match slot {
        Some(local) if local.epoch_id() == incoming.epoch_id() => {
            if local.absorb(incoming).is_err() {
                log::warn!("filter merge rejected: parameter mismatch");
            }
        }
        _ => *slot = Some(incoming.clone()),
    }
}

/// Result of presenting pseudonyms until one is accepted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetryOutcome {
    Granted {
        attempts: u32,
    },
    /// Every allowed pseudonym was denied as revoked.
    Exhausted {
        attempts: u32,
    },
    /// Denied for a reason another pseudonym would not fix.
    Denied(AuthDenial),
}

/// Client-side helper: present a capability from the first unused pseudonym
/// and, when it is denied as revoked (a filter false positive for an honest
/// client), retry with the next one, at most `extra` times.
pub fn retry_with_extra_pseudonym(
    unused: &[Rrp],
    slot: u64,
    timebase: &Timebase,
    extra: u32,
    mut present: impl FnMut(&Capability) -> Decision,
) -> RetryOutcome {
    let mut attempts = 0;
    for rrp in unused.iter().take(extra as usize + 1) {
        let Ok(cap) = get_capability(rrp, slot, &timebase.config(rrp.epoch_id)) else {
            return RetryOutcome::Denied(AuthDenial::NotGenuine);
        };
        attempts += 1;
        match present(&cap) {
            Decision::Granted => return RetryOutcome::Granted { attempts },
            Decision::Denied(AuthDenial::Revoked) => continue,
            Decision::Denied(other) => return RetryOutcome::Denied(other),
        }
    }
    RetryOutcome::Exhausted { attempts }
}
