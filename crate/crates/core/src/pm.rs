//! Pseudonym Manager: issuance with revocation checks, range revocation,
//! gossip of revocation filters and the quarantined epoch transition.
//!
//! [`TrustedZone`] is everything that would live inside the enclave: the PM
//! signing key, the client registry, instance accounting and the filters.
//! [`PmNode`] is the untrusted host around it that talks to the network.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::clock::Timebase;
use crate::crypto::{self, KeyPair, PublicKey, Signature};
use crate::ercset::{is_revoked_erc, ErcError, ErcSet, FilterParams, RevocationSet};
use crate::pseudonym::{create_rrp, get_capability, verify_capability, Capability, ClientId, Rrp};
use crate::slot_tree::{safe_cover, SlotRange};
use crate::wire::{Addr, Endorsement, EndorsementBundle, FilterBundle, Message, Outgoing, RrpRequest, RrpResponse};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IssueDenial {
    UnknownClient,
    Revoked,
    BudgetExhausted,
    EpochOutOfWindow,
    ProofRequired,
    BadProof,
}

impl IssueDenial {
    pub fn code(self) -> u8 {
        match self {
            IssueDenial::UnknownClient => 1,
            IssueDenial::Revoked => 2,
            IssueDenial::BudgetExhausted => 3,
            IssueDenial::EpochOutOfWindow => 4,
            IssueDenial::ProofRequired => 5,
            IssueDenial::BadProof => 6,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            1 => IssueDenial::UnknownClient,
            2 => IssueDenial::Revoked,
            3 => IssueDenial::BudgetExhausted,
            4 => IssueDenial::EpochOutOfWindow,
            5 => IssueDenial::ProofRequired,
            6 => IssueDenial::BadProof,
            _ => return None,
        })
    }
}

impl std::fmt::Display for IssueDenial {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            IssueDenial::UnknownClient => "unknown-client",
            IssueDenial::Revoked => "revoked",
            IssueDenial::BudgetExhausted => "budget-exhausted",
            IssueDenial::EpochOutOfWindow => "epoch-out-of-window",
            IssueDenial::ProofRequired => "proof-required",
            IssueDenial::BadProof => "bad-proof",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RevokeError {
    #[error("administrator signature does not verify")]
    BadSignature,
    #[error("order for epoch {order} but the local clock is in epoch {clock}")]
    WrongEpoch { order: u64, clock: u64 },
    #[error("revocation slot {rts} outside 0..{slots}")]
    SlotOutOfRange { rts: u64, slots: u64 },
    #[error("no filter held for epoch {0}")]
    NoFilter(u64),
    #[error(transparent)]
    Filter(#[from] ErcError),
}

/// Administrator order: revoke `cid` from slot `rts` of `epoch_id` onwards.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct RevocationOrder {
    pub cid: ClientId,
    pub rts: u64,
    pub epoch_id: u64,
    pub admin_sig: Signature,
}

impl RevocationOrder {
    /// `cid ‖ rts u64 BE ‖ epoch_id u64 BE`.
    pub fn signed_bytes(cid: &ClientId, rts: u64, epoch_id: u64) -> [u8; 48] {
        let mut out = [0u8; 48];
        out[..32].copy_from_slice(&cid.0);
        out[32..40].copy_from_slice(&rts.to_be_bytes());
        out[40..].copy_from_slice(&epoch_id.to_be_bytes());
        out
    }

    pub fn sign(admin: &KeyPair, cid: ClientId, rts: u64, epoch_id: u64) -> Self {
        let admin_sig = admin.sign(&Self::signed_bytes(&cid, rts, epoch_id));
        RevocationOrder { cid, rts, epoch_id, admin_sig }
    }

    pub fn verify(&self, admin: &PublicKey) -> bool {
        crypto::ver_sign(admin, &Self::signed_bytes(&self.cid, self.rts, self.epoch_id), &self.admin_sig)
    }
}

/// Outcome of merging received filters into local state.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MergeOutcome {
    pub changed: bool,
    pub mismatched: usize,
    pub ignored: usize,
}

/// Enclave-side PM state. Holds the filters for `epoch_now` and
/// `epoch_now + 1`, plus filter data for `epoch_now + 2` that arrives while
/// the node has not yet rotated.
#[derive(Clone, Debug)]
pub struct TrustedZone {
    key: KeyPair,
    admin: PublicKey,
    registry: BTreeMap<ClientId, u64>,
    issued: BTreeMap<(ClientId, u64), u32>,
    timebase: Timebase,
    params: FilterParams,
    instances: u32,
    epoch_now: u64,
    current: ErcSet,
    next: ErcSet,
    pending: Option<ErcSet>,
    retired: Option<ErcSet>,
}

impl TrustedZone {
    pub fn new(
        key: KeyPair,
        admin: PublicKey,
        timebase: Timebase,
        params: FilterParams,
        instances: u32,
        epoch_now: u64,
    ) -> Self {
        TrustedZone {
            key,
            admin,
            registry: BTreeMap::new(),
            issued: BTreeMap::new(),
            timebase,
            params,
            instances,
            epoch_now,
            current: ErcSet::empty(params, epoch_now),
            next: ErcSet::empty(params, epoch_now + 1),
            pending: None,
            retired: None,
        }
    }

    pub fn public(&self) -> PublicKey {
        self.key.public()
    }

    pub fn epoch_now(&self) -> u64 {
        self.epoch_now
    }

    pub fn instances(&self) -> u32 {
        self.instances
    }

    pub fn timebase(&self) -> &Timebase {
        &self.timebase
    }

    pub fn params(&self) -> FilterParams {
        self.params
    }

    /// Registers a client whose first epoch of service is `epoch_id`.
    pub fn enroll(&mut self, cid: ClientId, epoch_id: u64) {
        self.registry.insert(cid, epoch_id);
    }

    pub fn registry(&self) -> &BTreeMap<ClientId, u64> {
        &self.registry
    }

    pub fn issued(&self) -> &BTreeMap<(ClientId, u64), u32> {
        &self.issued
    }

    pub fn filter_for(&self, epoch_id: u64) -> Option<&ErcSet> {
        [Some(&self.current), Some(&self.next), self.pending.as_ref()]
            .into_iter()
            .flatten()
            .find(|f| f.epoch_id() == epoch_id)
    }

    fn filter_for_mut(&mut self, epoch_id: u64) -> Option<&mut ErcSet> {
        if epoch_id == self.epoch_now {
            Some(&mut self.current)
        } else if epoch_id == self.epoch_now + 1 {
            Some(&mut self.next)
        } else if epoch_id == self.epoch_now + 2 {
            let params = self.params;
            Some(self.pending.get_or_insert_with(|| ErcSet::empty(params, epoch_id)))
        } else {
            None
        }
    }

    pub fn filters(&self) -> Vec<ErcSet> {
        let mut out = vec![self.current.clone(), self.next.clone()];
        out.extend(self.pending.clone());
        out
    }

    /// Pseudonym issuance. `now` is the local clock in microseconds.
    pub fn issue(&mut self, req: &RrpRequest, now: u64, epsilon: u64) -> Result<Vec<Endorsement>, IssueDenial> {
        let clock_epoch = self.timebase.epoch_at(now);
        let Some(&enrolled) = self.registry.get(&req.cid) else {
            return Err(IssueDenial::UnknownClient);
        };
        let in_window = req.epoch_id == self.epoch_now || req.epoch_id == self.epoch_now + 1;
        if !in_window || req.epoch_id < clock_epoch || req.epoch_id < enrolled {
            return Err(IssueDenial::EpochOutOfWindow);
        }
        match &req.proof {
            Some(cap) => self.check_proof(&req.cid, cap, now, epsilon)?,
            None => self.check_bootstrap(&req.cid, enrolled, now)?,
        }
        let used = self.issued.get(&(req.cid, req.epoch_id)).copied().unwrap_or(0);
        if used >= self.instances {
            return Err(IssueDenial::BudgetExhausted);
        }
        let upto = used.saturating_add(req.count).min(self.instances);
        let out = ((used + 1)..=upto)
            .map(|instance| {
                let rrp = create_rrp(req.cid, req.epoch_id, instance, &self.key, self.instances)
                    .expect("instance within budget");
                Endorsement { instance, sig: rrp.endorsement }
            })
            .collect();
        self.issued.insert((req.cid, req.epoch_id), upto);
        Ok(out)
    }

    /// The proof must be a genuine capability of this client for the slot the
    /// local clock is in, and not revoked in the matching filter.
    fn check_proof(&self, cid: &ClientId, cap: &Capability, now: u64, epsilon: u64) -> Result<(), IssueDenial> {
        let slot = cap.slot().ok_or(IssueDenial::BadProof)?;
        if !self.timebase.within_slot(cap.epoch_id, slot, now, epsilon) {
            return Err(IssueDenial::BadProof);
        }
        let owned = (1..=self.instances).any(|i| Rrp::derive_public(cid, cap.epoch_id, i) == cap.pseudonym_pub);
        if !owned || !verify_capability(cap, &self.key.public(), slot, &self.timebase.config(cap.epoch_id)) {
            return Err(IssueDenial::BadProof);
        }
        let filter = self.filter_for(cap.epoch_id).ok_or(IssueDenial::BadProof)?;
        if is_revoked_erc(filter, cap) {
            return Err(IssueDenial::Revoked);
        }
        Ok(())
    }

    /// Without a proof only the enrollment epoch is served, and only while
    /// the client's first pseudonym is unrevoked for the current slot.
    fn check_bootstrap(&self, cid: &ClientId, enrolled: u64, now: u64) -> Result<(), IssueDenial> {
        let clock_epoch = self.timebase.epoch_at(now);
        if clock_epoch != enrolled {
            return Err(IssueDenial::ProofRequired);
        }
        let Some(filter) = self.filter_for(clock_epoch) else {
            return Err(IssueDenial::ProofRequired);
        };
        let rrp = create_rrp(*cid, clock_epoch, 1, &self.key, self.instances).expect("instance 1 exists");
        let cap = get_capability(&rrp, self.timebase.slot_at(now), &self.timebase.config(clock_epoch))
            .expect("slot from own clock");
        if is_revoked_erc(filter, &cap) {
            return Err(IssueDenial::Revoked);
        }
        Ok(())
    }

    /// Revokes every instance of the client for `[rts, T-1]` of the order's
    /// epoch and for the whole following epoch. Returns whether any filter
    /// gained bits.
    pub fn revoke(&mut self, order: &RevocationOrder, now: u64) -> Result<bool, RevokeError> {
        if !order.verify(&self.admin) {
            return Err(RevokeError::BadSignature);
        }
        let clock = self.timebase.epoch_at(now);
        if order.epoch_id != clock {
            return Err(RevokeError::WrongEpoch { order: order.epoch_id, clock });
        }
        let slots = self.timebase.slots();
        if order.rts >= slots {
            return Err(RevokeError::SlotOutOfRange { rts: order.rts, slots });
        }
        let e = order.epoch_id;
        let range_set =
            revocation_set(&self.key, self.instances, &order.cid, &self.timebase, e, order.rts, self.params)?;
        let root_set = revocation_set(&self.key, self.instances, &order.cid, &self.timebase, e + 1, 0, self.params)?;
        let mut changed = false;
        changed |= self.filter_for_mut(e).ok_or(RevokeError::NoFilter(e))?.absorb(&range_set)?;
        changed |= self.filter_for_mut(e + 1).ok_or(RevokeError::NoFilter(e + 1))?.absorb(&root_set)?;
        Ok(changed)
    }

    /// Merges every received filter whose epoch this zone tracks.
    pub fn merge(&mut self, incoming: &[ErcSet]) -> MergeOutcome {
        let mut out = MergeOutcome::default();
        for f in incoming {
            let Some(local) = self.filter_for_mut(f.epoch_id()) else {
                out.ignored += 1;
                continue;
            };
            match local.absorb(f) {
                Ok(changed) => out.changed |= changed,
                Err(_) => out.mismatched += 1,
            }
        }
        out
    }

    /// `current ← next`, `next ← pending or empty`; older data is dropped.
    pub fn rotate(&mut self) {
        self.epoch_now += 1;
        let fresh = self.pending.take().unwrap_or_else(|| ErcSet::empty(self.params, self.epoch_now + 1));
        let old = std::mem::replace(&mut self.next, fresh);
        self.retired = Some(std::mem::replace(&mut self.current, old));
    }

    /// Filter dropped by the last rotation, if nobody collected it yet.
    pub fn take_retired(&mut self) -> Option<ErcSet> {
        self.retired.take()
    }

    /// Restarts from empty filters with `epoch_now = epoch_id`; used when a
    /// node comes back more than one epoch behind its clock.
    pub fn rebase(&mut self, epoch_id: u64) {
        self.epoch_now = epoch_id;
        self.current = ErcSet::empty(self.params, epoch_id);
        self.next = ErcSet::empty(self.params, epoch_id + 1);
        self.pending = None;
    }

    pub fn snapshot(&self) -> PmSnapshot {
        PmSnapshot {
            epoch_now: self.epoch_now,
            registry: self.registry.iter().map(|(c, e)| (*c, *e)).collect(),
            issued: self.issued.iter().map(|((c, e), n)| (*c, *e, *n)).collect(),
            filters: self.filters(),
        }
    }

    /// Replaces registry, counters and filters with a snapshot's content.
    pub fn restore(&mut self, snap: &PmSnapshot) -> Result<(), RevokeError> {
        let mut fresh = self.clone();
        fresh.registry = snap.registry.iter().copied().collect();
        fresh.issued = snap.issued.iter().map(|(c, e, n)| ((*c, *e), *n)).collect();
        fresh.rebase(snap.epoch_now);
        let out = fresh.merge(&snap.filters);
        if out.mismatched > 0 {
            return Err(RevokeError::Filter(ErcError::ParamMismatch));
        }
        *self = fresh;
        Ok(())
    }
}

/// Filter holding the cover latchkeys of `[from_slot, T-1]` for every
/// instance of a client. The cover labels are exactly what the
/// merge / removeUnsafe / removeRedundant pipeline keeps for that range.
pub fn revocation_set(
    pm_key: &KeyPair,
    instances: u32,
    cid: &ClientId,
    timebase: &Timebase,
    epoch_id: u64,
    from_slot: u64,
    params: FilterParams,
) -> Result<ErcSet, RevokeError> {
    let cfg = timebase.config(epoch_id);
    let range = SlotRange::suffix(&cfg, from_slot)
        .map_err(|_| RevokeError::SlotOutOfRange { rts: from_slot, slots: cfg.slots() })?;
    let cover = safe_cover(&cfg, &range).expect("range built from cfg");
    let mut set = ErcSet::empty(params, epoch_id);
    for instance in 1..=instances {
        let rrp = create_rrp(*cid, epoch_id, instance, pm_key, instances).expect("instance within budget");
        for label in &cover {
            set.filter.insert_latchkey(&rrp.latchkey(*label).sig);
        }
    }
    Ok(set)
}

/// Registry, counters and filters of one PM, for the optional snapshot file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PmSnapshot {
    pub epoch_now: u64,
    pub registry: Vec<(ClientId, u64)>,
    pub issued: Vec<(ClientId, u64, u32)>,
    pub filters: Vec<ErcSet>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PmTiming {
    /// Upper bound on message delay in stable periods.
    pub delta_net: u64,
    /// Upper bound on clock skew.
    pub epsilon: u64,
    pub pull_timeout: u64,
}

impl PmTiming {
    pub fn min_quarantine(&self) -> u64 {
        2 * self.delta_net + 2 * self.epsilon
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Mode {
    Serving,
    Quarantine { target: u64, since: u64, reporters: BTreeSet<u32> },
}

/// Counters a PM keeps for reports.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PmStats {
    pub issued: u64,
    pub denied: u64,
    pub revocations: u64,
    pub pushes: u64,
    pub pulls: u64,
    pub dropped_mismatch: u64,
    pub quarantines: u64,
}

/// Host side of a PM: gossip, timers and the epoch-transition state machine.
/// Every handler is a function of (node state, input, local time).
#[derive(Debug, Clone)]
pub struct PmNode {
    pub id: u32,
    zone: TrustedZone,
    peers: Vec<u32>,
    faults: u32,
    timing: PmTiming,
    mode: Mode,
    last_update: u64,
    rng: ChaCha8Rng,
    pub stats: PmStats,
}

impl PmNode {
    /// `peers` excludes this node; `faults` is the bound f.
    pub fn new(id: u32, zone: TrustedZone, peers: Vec<u32>, faults: u32, timing: PmTiming, seed: u64) -> Self {
        PmNode {
            id,
            zone,
            peers,
            faults,
            timing,
            mode: Mode::Serving,
            last_update: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            stats: PmStats::default(),
        }
    }

    pub fn zone(&self) -> &TrustedZone {
        &self.zone
    }

    pub fn zone_mut(&mut self) -> &mut TrustedZone {
        &mut self.zone
    }

    pub fn mode(&self) -> &Mode {
        &self.mode
    }

    pub fn in_quarantine(&self) -> bool {
        matches!(self.mode, Mode::Quarantine { .. })
    }

    /// N − f, counting this node.
    pub fn quorum(&self) -> usize {
        (self.peers.len() + 1).saturating_sub(self.faults as usize)
    }

    fn bundle(&self, now: u64) -> FilterBundle {
        FilterBundle { clock_epoch: self.zone.timebase().epoch_at(now), filters: self.zone.filters() }
    }

    /// Sends local filters to f+1 distinct random peers.
    pub fn eager_push(&mut self, now: u64) -> Vec<Outgoing> {
        let fanout = (self.faults as usize + 1).min(self.peers.len());
        let bundle = self.bundle(now);
        self.stats.pushes += 1;
        sample(&mut self.rng, self.peers.len(), fanout)
            .into_iter()
            .map(|i| Outgoing { to: Addr::Pm(self.peers[i]), msg: Message::ErcPush(bundle.clone()) })
            .collect()
    }

    fn broadcast_report(&self, now: u64) -> Vec<Outgoing> {
        let bundle = self.bundle(now);
        self.peers.iter().map(|p| Outgoing { to: Addr::Pm(*p), msg: Message::EpochReport(bundle.clone()) }).collect()
    }

    pub fn handle(&mut self, from: Addr, msg: Message, now: u64) -> Vec<Outgoing> {
        match msg {
            Message::RequestRrp(req) => self.on_request(from, &req, now),
            Message::Revoke(order) => self.on_revoke(&order, now),
            Message::ErcPush(b) | Message::ErcPullResp(b) | Message::EpochReport(b) => match from {
                Addr::Pm(peer) => self.on_filters(peer, &b, now),
                _ => Vec::new(),
            },
            Message::ErcPullReq { .. } => {
                vec![Outgoing { to: from, msg: Message::ErcPullResp(self.bundle(now)) }]
            }
            Message::RrpResponse(_) | Message::AuthRequest(_) | Message::AuthResponse(_) => Vec::new(),
        }
    }

    fn on_request(&mut self, from: Addr, req: &RrpRequest, now: u64) -> Vec<Outgoing> {
        let resp = match self.zone.issue(req, now, self.timing.epsilon) {
            Ok(items) => {
                self.stats.issued += items.len() as u64;
                RrpResponse::Issued(EndorsementBundle { epoch_id: req.epoch_id, items })
            }
            Err(reason) => {
                self.stats.denied += 1;
                RrpResponse::Denied { epoch_id: req.epoch_id, reason }
            }
        };
        vec![Outgoing { to: from, msg: Message::RrpResponse(resp) }]
    }

    fn on_revoke(&mut self, order: &RevocationOrder, now: u64) -> Vec<Outgoing> {
        match self.zone.revoke(order, now) {
            Ok(true) => {
                self.stats.revocations += 1;
                self.after_change(now)
            }
            Ok(false) => Vec::new(),
            Err(e) => {
                log::info!("pm{} rejected revocation order: {e}", self.id);
                Vec::new()
            }
        }
    }

    /// Local filters gained bits: push to f+1 peers, and while quarantined
    /// also refresh the report every peer holds.
    fn after_change(&mut self, now: u64) -> Vec<Outgoing> {
        let mut out = self.eager_push(now);
        if self.in_quarantine() {
            out.extend(self.broadcast_report(now));
        }
        out
    }

    fn on_filters(&mut self, peer: u32, bundle: &FilterBundle, now: u64) -> Vec<Outgoing> {
        self.last_update = now;
        let merged = self.zone.merge(&bundle.filters);
        if merged.mismatched > 0 {
            self.stats.dropped_mismatch += merged.mismatched as u64;
            log::warn!("pm{} dropped {} filters from pm{peer}: parameter mismatch", self.id, merged.mismatched);
        }
        if let Mode::Quarantine { target, reporters, .. } = &mut self.mode {
            let carries_target = bundle.filter_for(*target).is_some_and(|f| f.params() == self.zone.params());
            if bundle.clock_epoch >= *target && carries_target {
                reporters.insert(peer);
            }
        }
        let mut out = if merged.changed { self.after_change(now) } else { Vec::new() };
        out.extend(self.try_finish_quarantine(now));
        out
    }

    /// Periodic timer: epoch boundary, quarantine exit and pull gossip.
    pub fn on_tick(&mut self, now: u64) -> Vec<Outgoing> {
        let mut out = self.check_epoch(now);
        out.extend(self.try_finish_quarantine(now));
        if now.saturating_sub(self.last_update) >= self.timing.pull_timeout && !self.peers.is_empty() {
            self.last_update = now;
            out.push(self.pull(now));
        }
        out
    }

    fn pull(&mut self, now: u64) -> Outgoing {
        self.stats.pulls += 1;
        let peer = self.peers[self.rng.gen_range(0..self.peers.len())];
        Outgoing { to: Addr::Pm(peer), msg: Message::ErcPullReq { clock_epoch: self.zone.timebase().epoch_at(now) } }
    }

    /// After a crash: pull right away, then let the tick logic catch up.
    pub fn on_recover(&mut self, now: u64) -> Vec<Outgoing> {
        let mut out = self.check_epoch(now);
        if !self.peers.is_empty() {
            self.last_update = now;
            out.push(self.pull(now));
        }
        out
    }

    fn check_epoch(&mut self, now: u64) -> Vec<Outgoing> {
        let clock = self.zone.timebase().epoch_at(now);
        if self.in_quarantine() || clock <= self.zone.epoch_now() {
            return Vec::new();
        }
        if clock > self.zone.epoch_now() + 1 {
            log::info!("pm{} is {} epochs behind; discarding stale filters", self.id, clock - self.zone.epoch_now());
            self.zone.rebase(clock - 1);
        }
        self.stats.quarantines += 1;
        self.mode = Mode::Quarantine { target: clock, since: now, reporters: BTreeSet::from([self.id]) };
        self.broadcast_report(now)
    }

    fn try_finish_quarantine(&mut self, now: u64) -> Vec<Outgoing> {
        let Mode::Quarantine { since, reporters, .. } = &self.mode else {
            return Vec::new();
        };
        if reporters.len() < self.quorum() || now.saturating_sub(*since) < self.timing.min_quarantine() {
            return Vec::new();
        }
        self.zone.rotate();
        self.mode = Mode::Serving;
        log::debug!("pm{} now serving epoch {}", self.id, self.zone.epoch_now());
        let mut out = self.eager_push(now);
        // the clock may already be further ahead
        out.extend(self.check_epoch(now));
        out
    }
}
