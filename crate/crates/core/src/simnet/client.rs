//! Simulated client: keeps pseudonyms for the current and next epoch,
//! authenticates at every access, and retries with spare pseudonyms.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::clock::Timebase;
use crate::crypto::PublicKey;
use crate::pm::IssueDenial;
use crate::pseudonym::{get_capability, ClientId, Rrp};
use crate::verifier::{AuthDenial, Decision};
use crate::wire::{Addr, Message, Outgoing, RrpRequest, RrpResponse};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClientConfig {
    pub pm_public: PublicKey,
    pub pm_count: u32,
    pub verifier_count: u32,
    pub per_request: u32,
    /// Spare pseudonyms tried after a revoked-looking denial.
    pub extra: u32,
    pub request_timeout: u64,
    pub retry_backoff: u64,
    pub transient_retries: u32,
    pub enrolled: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessOutcome {
    Granted { attempts: u32 },
    Denied(AuthDenial),
    Exhausted { attempts: u32 },
    NoPseudonym,
    Timeout,
}

impl AccessOutcome {
    pub fn label(&self) -> &'static str {
        match self {
            AccessOutcome::Granted { .. } => "granted",
            AccessOutcome::Denied(r) => r.as_str(),
            AccessOutcome::Exhausted { .. } => "exhausted",
            AccessOutcome::NoPseudonym => "no-pseudonym",
            AccessOutcome::Timeout => "timeout",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccessRecord {
    pub client: u32,
    pub at: u64,
    pub finished: u64,
    pub outcome: AccessOutcome,
}

#[derive(Debug, Clone)]
struct Attempt {
    started: u64,
    verifier: u32,
    epoch: u64,
    index: usize,
    revoked_denials: u32,
    transient: u32,
    sent_at: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClientStats {
    pub requests: u64,
    pub denials: u64,
    pub reused: u64,
}

#[derive(Debug, Clone)]
pub struct ClientAgent {
    pub idx: u32,
    pub cid: ClientId,
    cfg: ClientConfig,
    timebase: Timebase,
    held: BTreeMap<u64, Vec<Rrp>>,
    next_unused: BTreeMap<u64, usize>,
    pending_request: Option<(u64, u64)>,
    proof_choice: usize,
    attempt: Option<Attempt>,
    retry_at: Option<u64>,
    hold_until: u64,
    rng: ChaCha8Rng,
    pub stats: ClientStats,
    pub finished: Vec<AccessRecord>,
}

impl ClientAgent {
    pub fn new(idx: u32, cid: ClientId, cfg: ClientConfig, timebase: Timebase, seed: u64) -> Self {
        ClientAgent {
            idx,
            cid,
            cfg,
            timebase,
            held: BTreeMap::new(),
            next_unused: BTreeMap::new(),
            pending_request: None,
            proof_choice: 0,
            attempt: None,
            retry_at: None,
            hold_until: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            stats: ClientStats::default(),
            finished: Vec::new(),
        }
    }

    pub fn held(&self, epoch: u64) -> &[Rrp] {
        self.held.get(&epoch).map_or(&[], |v| v.as_slice())
    }

    fn random_pm(&mut self) -> Addr {
        Addr::Pm(self.rng.gen_range(0..self.cfg.pm_count))
    }

    pub fn on_tick(&mut self, now: u64) -> Vec<Outgoing> {
        let epoch = self.timebase.epoch_at(now);
        self.held.retain(|e, _| *e >= epoch);
        self.next_unused.retain(|e, _| *e >= epoch);
        let mut out = Vec::new();
        if let Some(a) = self.attempt.as_ref().filter(|_| self.retry_at.is_none()) {
            if now.saturating_sub(a.sent_at) > self.cfg.request_timeout {
                self.finish(now, AccessOutcome::Timeout);
            }
        }
        if self.retry_at.is_some_and(|t| now >= t) {
            self.retry_at = None;
            out.extend(self.send_attempt(now));
        }
        if let Some((_, sent)) = self.pending_request {
            if now.saturating_sub(sent) <= self.cfg.request_timeout {
                return out;
            }
            self.pending_request = None;
        }
        if now < self.hold_until {
            return out;
        }
        let want = if self.held(epoch).is_empty() {
            epoch
        } else if self.held(epoch + 1).is_empty() {
            epoch + 1
        } else {
            return out;
        };
        out.extend(self.request(want, now));
        out
    }

    fn request(&mut self, want: u64, now: u64) -> Option<Outgoing> {
        let epoch = self.timebase.epoch_at(now);
        let proof = match self.held(epoch) {
            [] if epoch == self.cfg.enrolled => None,
            [] => return None,
            pool => {
                let rrp = &pool[self.proof_choice % pool.len()];
                Some(get_capability(rrp, self.timebase.slot_at(now), &self.timebase.config(epoch)).ok()?)
            }
        };
        self.pending_request = Some((want, now));
        self.stats.requests += 1;
        let req = RrpRequest { cid: self.cid, epoch_id: want, count: self.cfg.per_request, proof };
        Some(Outgoing { to: self.random_pm(), msg: Message::RequestRrp(req) })
    }

    pub fn handle(&mut self, msg: Message, now: u64) -> Vec<Outgoing> {
        match msg {
            Message::RrpResponse(resp) => {
                self.on_issue(resp, now);
                Vec::new()
            }
            Message::AuthResponse(r) => self.on_auth(r.pseudonym_pub, r.decision, now),
            _ => Vec::new(),
        }
    }

    fn on_issue(&mut self, resp: RrpResponse, now: u64) {
        self.pending_request = None;
        match resp {
            RrpResponse::Issued(bundle) => {
                let pool = self.held.entry(bundle.epoch_id).or_default();
                for e in bundle.items {
                    let rrp = Rrp::from_endorsement(self.cid, bundle.epoch_id, e.instance, e.sig);
                    if rrp.endorsed_by(&self.cfg.pm_public) && !pool.iter().any(|r| r.instance == e.instance) {
                        pool.push(rrp);
                    }
                }
                pool.sort_by_key(|r| r.instance);
            }
            RrpResponse::Denied { reason, .. } => {
                self.stats.denials += 1;
                self.hold_until = now + self.cfg.retry_backoff;
                if reason == IssueDenial::Revoked {
                    self.proof_choice += 1;
                }
            }
        }
    }

    /// Starts an access: one fresh pseudonym per access, reusing the last
    /// one only when the pool is used up.
    pub fn on_access(&mut self, now: u64) -> Vec<Outgoing> {
        if self.attempt.is_some() {
            self.finish(now, AccessOutcome::Timeout);
        }
        let epoch = self.timebase.epoch_at(now);
        let pool_len = self.held(epoch).len();
        if pool_len == 0 {
            self.finished.push(AccessRecord {
                client: self.idx,
                at: now,
                finished: now,
                outcome: AccessOutcome::NoPseudonym,
            });
            return Vec::new();
        }
        let next = self.next_unused.entry(epoch).or_insert(0);
        let index = if *next < pool_len {
            *next += 1;
            *next - 1
        } else {
            self.stats.reused += 1;
            pool_len - 1
        };
        let verifier = self.rng.gen_range(0..self.cfg.verifier_count);
        self.attempt =
            Some(Attempt { started: now, verifier, epoch, index, revoked_denials: 0, transient: 0, sent_at: now });
        self.send_attempt(now)
    }

    fn send_attempt(&mut self, now: u64) -> Vec<Outgoing> {
        let Some(a) = self.attempt.as_mut() else { return Vec::new() };
        let epoch = self.timebase.epoch_at(now);
        if epoch != a.epoch {
            // the access straddled a rollover; move to the new epoch's pool
            a.epoch = epoch;
            a.index = self.next_unused.get(&epoch).copied().unwrap_or(0);
        }
        let Some(rrp) = self.held.get(&epoch).and_then(|p| p.get(a.index)) else {
            self.finish(now, AccessOutcome::NoPseudonym);
            return Vec::new();
        };
        let cap =
            get_capability(rrp, self.timebase.slot_at(now), &self.timebase.config(epoch)).expect("slot from own clock");
        a.sent_at = now;
        vec![Outgoing { to: Addr::Verifier(a.verifier), msg: Message::AuthRequest(cap) }]
    }

    fn on_auth(&mut self, pub_key: PublicKey, decision: Decision, now: u64) -> Vec<Outgoing> {
        let Some(a) = self.attempt.as_mut() else { return Vec::new() };
        let current = self.held.get(&a.epoch).and_then(|p| p.get(a.index)).map(|r| r.public());
        if current != Some(pub_key) {
            return Vec::new();
        }
        let attempts = a.revoked_denials + 1;
        match decision {
            Decision::Granted => {
                self.finish(now, AccessOutcome::Granted { attempts });
                Vec::new()
            }
            Decision::Denied(AuthDenial::Revoked) => {
                a.revoked_denials += 1;
                let pool = self.held.get(&a.epoch).map_or(0, |p| p.len());
                let next = self.next_unused.entry(a.epoch).or_insert(0);
                if a.revoked_denials > self.cfg.extra || *next >= pool {
                    let attempts = a.revoked_denials;
                    self.finish(now, AccessOutcome::Exhausted { attempts });
                    return Vec::new();
                }
                a.index = *next;
                *next += 1;
                self.send_attempt(now)
            }
            Decision::Denied(r @ (AuthDenial::StaleState | AuthDenial::WrongEpoch | AuthDenial::WrongSlot)) => {
                if a.transient >= self.cfg.transient_retries {
                    self.finish(now, AccessOutcome::Denied(r));
                } else {
                    a.transient += 1;
                    self.retry_at = Some(now + self.cfg.retry_backoff);
                }
                Vec::new()
            }
            Decision::Denied(r) => {
                self.finish(now, AccessOutcome::Denied(r));
                Vec::new()
            }
        }
    }

    fn finish(&mut self, now: u64, outcome: AccessOutcome) {
        if let Some(a) = self.attempt.take() {
            self.retry_at = None;
            self.finished.push(AccessRecord { client: self.idx, at: a.started, finished: now, outcome });
        }
    }
}
