//! Deterministic discrete-event simulation of PMs, verifiers and clients
//! under partial synchrony, clock skew and crash/omission faults.
//!
//! Every message is encoded and decoded through [`crate::codec`] on each hop.
//! Messages sent inside an unstable window are held until the window ends and
//! then delivered with an ordinary stable-period delay.

pub mod client;
pub mod linkage;
pub mod report;
pub mod scenario;
pub mod sweep;
pub mod trace;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::clock::{Timebase, MICROS_PER_SEC};
use crate::codec;
use crate::crypto::{det_key_gen, digest_parts, KeyPair, PublicKey};
use crate::ercset::{is_revoked_erc, ErcSet};
use crate::pm::{PmNode, PmTiming, RevocationOrder, TrustedZone};
use crate::pseudonym::{create_rrp, get_capability, Capability, ClientId, Rrp};
use crate::verifier::{Decision, VerifierConfig, VerifierMode, VerifierNode};
use crate::wire::{Addr, Message, Outgoing, RrpResponse};

use client::{ClientAgent, ClientConfig};
use linkage::{inject_linkage_adversary, GroundTruth};
pub use report::SimReport;
use report::{
    AssertionResult, ByzRecord, FilterDigest, IssueRecord, MessageCount, PmSummary, RevocationRecord, VerifierSummary,
};
use scenario::{micros, parse_clock_target, ByzantineKind, ClockTarget, DelayMode, OmissionMode};
pub use scenario::{ScenarioError, SimConfig};
use trace::{generate_trace, max_daily_demand, TraceParams};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("event budget of {budget} exceeded at {at} us")]
    Budget { budget: u64, at: u64, partial: Box<SimReport> },
}

#[derive(Debug, Clone)]
enum EventKind {
    Deliver { from: Addr, to: Addr, bytes: Vec<u8> },
    Tick(Addr),
    Crash(u32),
    Recover(u32),
    Shift(ClockTarget, i64),
    Revoke(usize),
    Access(u32),
}

#[derive(Debug)]
struct Event {
    at: u64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// reversed: BinaryHeap pops the earliest (at, seq) first
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

/// Keys and client ids every run derives from its seed.
pub struct Identities {
    pub pm_key: KeyPair,
    pub admin: KeyPair,
    pub cids: Vec<ClientId>,
}

impl Identities {
    pub fn derive(seed: u64, clients: u32) -> Self {
        let s = seed.to_be_bytes();
        Identities {
            pm_key: det_key_gen(&digest_parts(&[b"sim-pm-key", &s])),
            admin: det_key_gen(&digest_parts(&[b"sim-admin-key", &s])),
            cids: (0..clients).map(|i| ClientId(digest_parts(&[b"sim-client", &s, &i.to_be_bytes()]).0)).collect(),
        }
    }
}

struct Byz {
    kind: ByzantineKind,
    pending: u32,
    captured: Option<(Capability, u64)>,
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    tb: Timebase,
    ids: Identities,
    forge_key: KeyPair,
    heap: BinaryHeap<Event>,
    seq: u64,
    now: u64,
    events: u64,
    delta: u64,
    epsilon: u64,
    tick: u64,
    unstable: Vec<(u64, u64)>,
    net_rng: ChaCha8Rng,
    pms: Vec<PmNode>,
    verifiers: Vec<VerifierNode>,
    clients: Vec<ClientAgent>,
    pm_offset: Vec<i64>,
    ver_offset: Vec<i64>,
    client_offset: Vec<i64>,
    crashed: Vec<bool>,
    ever_crashed: Vec<bool>,
    shifted: Vec<bool>,
    /// (send, receive) drop probabilities per PM.
    omission: Vec<(f64, f64)>,
    byz: BTreeMap<u32, Byz>,
    ver_mode: Vec<VerifierMode>,
    ver_summary: Vec<VerifierSummary>,
    messages: BTreeMap<&'static str, MessageCount>,
    issuance: Vec<IssueRecord>,
    revocations: Vec<RevocationRecord>,
    /// Verifier-local time at which each verifier learned each revocation.
    learned_local: Vec<Vec<Option<u64>>>,
    byz_records: Vec<ByzRecord>,
    owner: BTreeMap<PublicKey, u32>,
    archive: BTreeMap<u64, ErcSet>,
    probe_cache: BTreeMap<(u32, u64), Rrp>,
    peak_daily_demand: u64,
}

fn shifted_time(now: u64, offset: i64) -> u64 {
    (now as i64).saturating_add(offset).max(0) as u64
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a SimConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let tb = cfg.timebase()?;
        let params = cfg.filter_params()?;
        let s = &cfg.sim;
        let n = &cfg.network;
        let ids = Identities::derive(s.seed, s.clients);
        let mut master = ChaCha8Rng::seed_from_u64(s.seed);
        let delta = micros(n.delay).max(1);
        let epsilon = micros(n.skew);
        let half = (epsilon / 2) as i64;
        let offset = |rng: &mut ChaCha8Rng| if half == 0 { 0 } else { rng.gen_range(-half..=half) };
        let pm_offset: Vec<i64> = (0..s.pms).map(|_| offset(&mut master)).collect();
        let ver_offset: Vec<i64> = (0..s.verifiers).map(|_| offset(&mut master)).collect();
        let client_offset: Vec<i64> = (0..s.clients).map(|_| offset(&mut master)).collect();

        let timing = PmTiming { delta_net: delta, epsilon, pull_timeout: micros(n.pull_timeout) };
        let pms = (0..s.pms)
            .map(|i| {
                let mut zone =
                    TrustedZone::new(ids.pm_key.clone(), ids.admin.public(), tb, params, cfg.epoch.pseudonyms, 0);
                for cid in &ids.cids {
                    zone.enroll(*cid, 0);
                }
                let peers = (0..s.pms).filter(|p| *p != i).collect();
                PmNode::new(i, zone, peers, s.faults, timing, master.gen())
            })
            .collect();
        let pull_period = micros(n.verifier_pull);
        let vcfg = VerifierConfig {
            pm_public: ids.pm_key.public(),
            pm_count: s.pms,
            pull_period,
            staleness_limit: n.staleness.map_or_else(|| VerifierConfig::default_staleness(pull_period), micros),
            epsilon,
            prefetch: n.prefetch,
            params,
        };
        let verifiers = (0..s.verifiers).map(|i| VerifierNode::new(i, vcfg, tb, master.gen())).collect();
        let ccfg = ClientConfig {
            pm_public: ids.pm_key.public(),
            pm_count: s.pms,
            verifier_count: s.verifiers,
            per_request: cfg.workload.per_request,
            extra: cfg.workload.extra,
            request_timeout: (4 * delta).max(MICROS_PER_SEC),
            retry_backoff: (2 * delta).max(MICROS_PER_SEC / 2),
            transient_retries: 3,
            enrolled: 0,
        };
        let clients =
            (0..s.clients).map(|i| ClientAgent::new(i, ids.cids[i as usize], ccfg, tb, master.gen())).collect();
        let mut omission = vec![(0.0, 0.0); s.pms as usize];
        for o in &cfg.omission {
            omission[o.pm as usize] = match o.mode {
                OmissionMode::Both => (o.drop, o.drop),
                OmissionMode::Send => (o.drop, 0.0),
                OmissionMode::Receive => (0.0, o.drop),
            };
        }
        let byz = cfg.byzantine.iter().map(|b| (b.client, Byz { kind: b.kind, pending: 0, captured: None })).collect();
        let forge_key = det_key_gen(&digest_parts(&[b"sim-forger", &s.seed.to_be_bytes()]));
        let mut sim = Sim {
            cfg,
            tb,
            ids,
            forge_key,
            heap: BinaryHeap::new(),
            seq: 0,
            now: 0,
            events: 0,
            delta,
            epsilon,
            tick: micros(s.tick).max(1),
            unstable: cfg.unstable.iter().map(|w| (micros(w.start), micros(w.end))).collect(),
            net_rng: ChaCha8Rng::seed_from_u64(master.gen()),
            pms,
            verifiers,
            clients,
            pm_offset,
            ver_offset,
            client_offset,
            crashed: vec![false; s.pms as usize],
            ever_crashed: vec![false; s.pms as usize],
            shifted: vec![false; s.pms as usize],
            omission,
            byz,
            ver_mode: vec![VerifierMode::Safe; s.verifiers as usize],
            ver_summary: (0..s.verifiers).map(|id| VerifierSummary { id, ..Default::default() }).collect(),
            messages: BTreeMap::new(),
            issuance: Vec::new(),
            revocations: Vec::new(),
            learned_local: Vec::new(),
            byz_records: Vec::new(),
            owner: BTreeMap::new(),
            archive: BTreeMap::new(),
            probe_cache: BTreeMap::new(),
            peak_daily_demand: 0,
        };
        sim.schedule_initial(&mut master);
        Ok(sim)
    }

    fn push(&mut self, at: u64, kind: EventKind) {
        self.seq += 1;
        self.heap.push(Event { at, seq: self.seq, kind });
    }

    fn schedule_initial(&mut self, master: &mut ChaCha8Rng) {
        let cfg = self.cfg;
        let s = &cfg.sim;
        let mut addrs: Vec<Addr> = (0..s.pms).map(Addr::Pm).collect();
        addrs.extend((0..s.verifiers).map(Addr::Verifier));
        addrs.extend((0..s.clients).map(Addr::Client));
        for a in addrs {
            let phase = master.gen_range(0..self.tick);
            self.push(phase, EventKind::Tick(a));
        }
        let horizon = micros(s.horizon);
        let trace = generate_trace(&TraceParams {
            clients: s.clients,
            trips_per_client: cfg.workload.trips_per_client,
            changes_per_trip: cfg.workload.changes_per_trip,
            start: micros(cfg.workload.start),
            horizon,
            peak_client: cfg.workload.peak_client,
            seed: master.gen(),
        });
        self.peak_daily_demand = max_daily_demand(&trace);
        for a in trace {
            self.push(a.at, EventKind::Access(a.client));
        }
        for c in &cfg.crash {
            self.push(micros(c.at), EventKind::Crash(c.pm));
            if let Some(r) = c.recover {
                self.push(micros(r), EventKind::Recover(c.pm));
            }
        }
        for c in &cfg.clock {
            let target = parse_clock_target(&c.node).expect("validated");
            let shift = (c.shift * MICROS_PER_SEC as f64).round() as i64;
            self.push(micros(c.at), EventKind::Shift(target, shift));
        }
        for (i, r) in cfg.revocation.iter().enumerate() {
            self.push(micros(r.at), EventKind::Revoke(i));
        }
    }

    fn local(&self, addr: Addr) -> u64 {
        match addr {
            Addr::Admin => self.now,
            Addr::Pm(i) => shifted_time(self.now, self.pm_offset[i as usize]),
            Addr::Verifier(i) => shifted_time(self.now, self.ver_offset[i as usize]),
            Addr::Client(i) => shifted_time(self.now, self.client_offset[i as usize]),
        }
    }

    fn pm_correct(&self, i: usize) -> bool {
        !self.ever_crashed[i] && self.omission[i] == (0.0, 0.0) && !self.shifted[i]
    }

    fn drop_probability(&self, from: Addr, to: Addr) -> f64 {
        let send = match from {
            Addr::Pm(i) => self.omission[i as usize].0,
            _ => 0.0,
        };
        let receive = match to {
            Addr::Pm(i) => self.omission[i as usize].1,
            _ => 0.0,
        };
        send.max(receive)
    }

    fn delay(&mut self) -> u64 {
        match self.cfg.network.delay_mode {
            DelayMode::Uniform => self.net_rng.gen_range(1..=self.delta),
            DelayMode::Min => 1,
            DelayMode::Max => self.delta,
        }
    }

    fn send(&mut self, from: Addr, outs: Vec<Outgoing>) {
        for o in outs {
            let kind = o.msg.kind();
            let bytes = codec::encode_message(&o.msg).expect("simulated messages fit the wire format");
            let count = self.messages.entry(kind).or_default();
            count.sent += 1;
            count.bytes += bytes.len() as u64;
            if let (Addr::Pm(pm), Addr::Client(client), Message::RrpResponse(RrpResponse::Issued(b))) =
                (from, o.to, &o.msg)
            {
                self.issuance.push(IssueRecord {
                    at: self.now,
                    pm,
                    client,
                    epoch: b.epoch_id,
                    count: b.items.len() as u32,
                });
                let cid = self.ids.cids[client as usize];
                for e in &b.items {
                    self.owner.insert(Rrp::derive_public(&cid, b.epoch_id, e.instance), client);
                }
            }
            let p = self.drop_probability(from, o.to);
            if p > 0.0 && self.net_rng.gen_bool(p) {
                self.messages.entry(kind).or_default().dropped += 1;
                continue;
            }
            let delay = self.delay();
            let base = self.unstable.iter().find(|(s, e)| (*s..*e).contains(&self.now)).map_or(self.now, |w| w.1);
            self.push(base + delay, EventKind::Deliver { from, to: o.to, bytes });
        }
    }

    fn after_pm(&mut self, i: usize) {
        if let Some(old) = self.pms[i].zone_mut().take_retired() {
            archive_filter(&mut self.archive, &old);
        }
    }

    fn deliver(&mut self, from: Addr, to: Addr, bytes: Vec<u8>) {
        let msg = codec::decode_message(&bytes).expect("round trip of our own encoding");
        let kind = msg.kind();
        if matches!(to, Addr::Pm(i) if self.crashed[i as usize]) {
            self.messages.entry(kind).or_default().dropped += 1;
            return;
        }
        self.messages.entry(kind).or_default().delivered += 1;
        let local = self.local(to);
        match to {
            Addr::Pm(i) => {
                let idx = i as usize;
                let order = match &msg {
                    Message::Revoke(o) => Some(o.clone()),
                    _ => None,
                };
                let before = self.pms[idx].stats.revocations;
                let out = self.pms[idx].handle(from, msg, local);
                if let Some(o) = order.filter(|_| self.pms[idx].stats.revocations > before) {
                    self.mark_accepted(&o);
                }
                self.after_pm(idx);
                self.send(to, out);
            }
            Addr::Verifier(v) => {
                let is_pull = matches!(msg, Message::ErcPullResp(_));
                let out = self.verifiers[v as usize].handle(from, msg, local);
                if is_pull {
                    self.check_learned(v as usize);
                }
                self.send(to, out);
            }
            Addr::Client(c) => {
                if let Message::AuthResponse(r) = &msg {
                    if let Some(b) = self.byz.get_mut(&c).filter(|b| b.pending > 0) {
                        b.pending -= 1;
                        let stale = b.captured.as_ref().is_some_and(|(_, at)| {
                            self.now.saturating_sub(*at) > self.tb.slot_us() + 2 * self.epsilon + 2 * self.delta
                        });
                        let rec = ByzRecord {
                            at: self.now,
                            client: c,
                            kind: b.kind,
                            decision: r.decision,
                            stale_grant: b.kind == ByzantineKind::Replay && stale,
                        };
                        self.byz_records.push(rec);
                        return;
                    }
                }
                let out = self.clients[c as usize].handle(msg, local);
                self.send(to, out);
            }
            Addr::Admin => {}
        }
    }

    fn mark_accepted(&mut self, o: &RevocationOrder) {
        let now = self.now;
        let cids = &self.ids.cids;
        if let Some(r) = self.revocations.iter_mut().find(|r| {
            r.accepted_at.is_none() && r.epoch == o.epoch_id && r.rts == o.rts && cids[r.client as usize] == o.cid
        }) {
            r.accepted_at = Some(now);
        }
    }

    /// Probes a verifier's filter with the revoked client's first pseudonym
    /// at the earliest slot that must be revoked.
    fn check_learned(&mut self, v: usize) {
        let local = self.local(Addr::Verifier(v as u32));
        let Some(erc_epoch) = self.verifiers[v].erc_local().map(|e| e.epoch_id()) else { return };
        for i in 0..self.revocations.len() {
            let r = &self.revocations[i];
            if r.accepted_at.is_none() || r.learned[v].is_some() {
                continue;
            }
            let slot = if erc_epoch == r.epoch {
                let clock_slot = if self.tb.epoch_at(local) == r.epoch { self.tb.slot_at(local) } else { 0 };
                r.rts.max(clock_slot)
            } else if erc_epoch == r.epoch + 1 {
                if self.tb.epoch_at(local) == erc_epoch {
                    self.tb.slot_at(local)
                } else {
                    0
                }
            } else {
                continue;
            };
            let client = r.client;
            let cap = self.probe(client, erc_epoch, slot);
            let erc = self.verifiers[v].erc_local().expect("checked above");
            if is_revoked_erc(erc, &cap) {
                self.revocations[i].learned[v] = Some(self.now);
                self.learned_local[i][v] = Some(local);
            }
        }
    }

    fn probe(&mut self, client: u32, epoch: u64, slot: u64) -> Capability {
        let cid = self.ids.cids[client as usize];
        let (key, instances) = (&self.ids.pm_key, self.cfg.epoch.pseudonyms);
        let rrp = self
            .probe_cache
            .entry((client, epoch))
            .or_insert_with(|| create_rrp(cid, epoch, 1, key, instances).expect("instance 1 exists"));
        get_capability(rrp, slot, &self.tb.config(epoch)).expect("slot inside the epoch")
    }

    fn on_tick(&mut self, addr: Addr) {
        self.push(self.now + self.tick, EventKind::Tick(addr));
        let local = self.local(addr);
        match addr {
            Addr::Pm(i) => {
                if self.crashed[i as usize] {
                    return;
                }
                let out = self.pms[i as usize].on_tick(local);
                self.after_pm(i as usize);
                self.send(addr, out);
            }
            Addr::Verifier(v) => {
                let vi = v as usize;
                let out = self.verifiers[vi].on_tick(local);
                let mode = self.verifiers[vi].mode(local);
                if mode != self.ver_mode[vi] {
                    // the first pull of a run is not a recovery
                    let initial = self.ver_summary[vi].last_pull.is_none() && self.verifiers[vi].last_pull().is_some();
                    match mode {
                        VerifierMode::Safe => self.ver_summary[vi].safe_mode_entries += 1,
                        VerifierMode::Serving if !initial => self.ver_summary[vi].safe_mode_exits += 1,
                        VerifierMode::Serving => {}
                    }
                    self.ver_mode[vi] = mode;
                }
                self.ver_summary[vi].last_pull = self.verifiers[vi].last_pull();
                self.check_learned(vi);
                self.send(addr, out);
            }
            Addr::Client(c) => {
                let out = self.clients[c as usize].on_tick(local);
                self.send(addr, out);
            }
            Addr::Admin => {}
        }
    }

    fn on_access(&mut self, c: u32) {
        let addr = Addr::Client(c);
        let local = self.local(addr);
        let Some(b) = self.byz.get(&c) else {
            let out = self.clients[c as usize].on_access(local);
            self.send(addr, out);
            return;
        };
        let verifier = Addr::Verifier(self.net_rng.gen_range(0..self.cfg.sim.verifiers));
        let cap = match (b.kind, &b.captured) {
            (ByzantineKind::Forge, _) => {
                let epoch = self.tb.epoch_at(local);
                let rrp = create_rrp(self.ids.cids[c as usize], epoch, 1, &self.forge_key, self.cfg.epoch.pseudonyms)
                    .expect("instance 1 exists");
                get_capability(&rrp, self.tb.slot_at(local), &self.tb.config(epoch)).expect("slot from own clock")
            }
            (ByzantineKind::Replay, Some((cap, _))) => cap.clone(),
            (ByzantineKind::Replay, None) => {
                let out = self.clients[c as usize].on_access(local);
                let shown = out.iter().find_map(|o| match &o.msg {
                    Message::AuthRequest(cap) => Some(cap.clone()),
                    _ => None,
                });
                if let Some(cap) = shown {
                    self.byz.get_mut(&c).expect("present").captured = Some((cap, self.now));
                }
                self.send(addr, out);
                return;
            }
        };
        self.byz.get_mut(&c).expect("present").pending += 1;
        self.send(addr, vec![Outgoing { to: verifier, msg: Message::AuthRequest(cap) }]);
    }

    fn on_revoke(&mut self, idx: usize) {
        let spec = &self.cfg.revocation[idx];
        let epoch = self.tb.epoch_at(self.now);
        let rts = self.tb.slot_at(self.now);
        let cid = self.ids.cids[spec.client as usize];
        self.revocations.push(RevocationRecord {
            client: spec.client,
            epoch,
            rts,
            at: self.now,
            accepted_at: None,
            learned: vec![None; self.verifiers.len()],
        });
        self.learned_local.push(vec![None; self.verifiers.len()]);
        let order = RevocationOrder::sign(&self.ids.admin, cid, rts, epoch);
        self.send(Addr::Admin, vec![Outgoing { to: Addr::Pm(0), msg: Message::Revoke(order) }]);
    }

    fn step(&mut self, ev: Event) {
        self.now = ev.at;
        match ev.kind {
            EventKind::Deliver { from, to, bytes } => self.deliver(from, to, bytes),
            EventKind::Tick(a) => self.on_tick(a),
            EventKind::Crash(i) => {
                self.crashed[i as usize] = true;
                self.ever_crashed[i as usize] = true;
            }
            EventKind::Recover(i) => {
                self.crashed[i as usize] = false;
                let local = self.local(Addr::Pm(i));
                let out = self.pms[i as usize].on_recover(local);
                self.after_pm(i as usize);
                self.send(Addr::Pm(i), out);
            }
            EventKind::Shift(ClockTarget::Pm(i), d) => {
                self.pm_offset[i as usize] += d;
                self.shifted[i as usize] = true;
            }
            EventKind::Shift(ClockTarget::Verifier(i), d) => self.ver_offset[i as usize] += d,
            EventKind::Revoke(i) => self.on_revoke(i),
            EventKind::Access(c) => self.on_access(c),
        }
    }

    fn run(mut self) -> Result<SimReport, SimError> {
        let horizon = micros(self.cfg.sim.horizon);
        let budget = self.cfg.sim.event_budget;
        while let Some(ev) = self.heap.pop() {
            if ev.at > horizon {
                break;
            }
            if self.events >= budget {
                let at = ev.at;
                let partial = Box::new(self.finish(false));
                return Err(SimError::Budget { budget, at, partial });
            }
            self.events += 1;
            self.step(ev);
        }
        self.now = self.now.max(horizon);
        Ok(self.finish(true))
    }

    /// Epoch ≥ t+2 issuances by correct PMs to a client revoked in epoch t.
    /// The first list covers orders accepted by a correct PM (the guarantee),
    /// the second orders accepted by a PM that later failed.
    fn late_issuance(&self) -> (Vec<String>, Vec<String>) {
        let (mut guarded, mut unguarded) = (Vec::new(), Vec::new());
        for r in &self.revocations {
            let Some(accepted) = r.accepted_at else { continue };
            for is in &self.issuance {
                if is.client == r.client
                    && is.epoch >= r.epoch + 2
                    && is.at >= accepted
                    && self.pm_correct(is.pm as usize)
                {
                    let line = format!(
                        "pm{} issued epoch {} to client {} at {} us after its revocation in epoch {}",
                        is.pm, is.epoch, is.client, is.at, r.epoch
                    );
                    if self.pm_correct(0) {
                        guarded.push(line)
                    } else {
                        unguarded.push(line)
                    }
                }
            }
        }
        (guarded, unguarded)
    }

    /// Correct PMs agree on every filter epoch they both hold.
    fn converged(&self) -> bool {
        let correct: Vec<Vec<ErcSet>> =
            (0..self.pms.len()).filter(|i| self.pm_correct(*i)).map(|i| self.pms[i].zone().filters()).collect();
        correct.iter().enumerate().all(|(i, a)| {
            correct[i + 1..]
                .iter()
                .all(|b| a.iter().all(|fa| b.iter().filter(|fb| fb.epoch_id() == fa.epoch_id()).all(|fb| fb == fa)))
        })
    }

    fn revoked_grants(&self, transcript: &[(u32, crate::verifier::TranscriptLine)]) -> u64 {
        let mut n = 0;
        for (v, line) in transcript {
            if !line.decision.is_granted() {
                continue;
            }
            let Some(client) = self.owner.get(&line.pseudonym_pub) else { continue };
            for (i, r) in self.revocations.iter().enumerate() {
                let Some(learned) = self.learned_local[i][*v as usize] else { continue };
                let covered = (line.capability.epoch_id == r.epoch && line.slot.is_some_and(|s| s >= r.rts))
                    || line.capability.epoch_id == r.epoch + 1;
                if r.client == *client && line.at >= learned && covered {
                    n += 1;
                }
            }
        }
        n
    }

    fn finish(mut self, completed: bool) -> SimReport {
        for i in 0..self.pms.len() {
            self.after_pm(i);
            for f in self.pms[i].zone().filters() {
                archive_filter(&mut self.archive, &f);
            }
        }
        let transcript: Vec<(u32, crate::verifier::TranscriptLine)> =
            self.verifiers.iter().flat_map(|v| v.transcript.iter().map(move |l| (v.id, l.clone()))).collect();
        let mut accesses: Vec<_> = self.clients.iter().flat_map(|c| c.finished.iter().copied()).collect();
        accesses.sort_by_key(|a| (a.at, a.client));
        let mut verifiers = self.ver_summary.clone();
        for (v, line) in &transcript {
            let s = &mut verifiers[*v as usize];
            match line.decision {
                Decision::Granted => s.granted += 1,
                Decision::Denied(r) => *s.denied.entry(r.as_str()).or_default() += 1,
            }
        }
        let pms = self
            .pms
            .iter()
            .enumerate()
            .map(|(i, p)| PmSummary {
                id: p.id,
                epoch_now: p.zone().epoch_now(),
                quarantine: p.in_quarantine(),
                correct: self.pm_correct(i),
                crashed: self.crashed[i],
                stats: p.stats,
                filters: p.zone().filters().iter().map(FilterDigest::of).collect(),
            })
            .collect();
        let a = &self.cfg.assertions;
        let linkage = (a.linkage_p_value_min.is_some() || a.linkage_samples.is_some()).then(|| {
            let lines: Vec<_> = transcript.iter().map(|(_, l)| l.clone()).collect();
            let truth = GroundTruth {
                owner: self.owner.clone(),
                revoked: self
                    .revocations
                    .iter()
                    .filter(|r| r.accepted_at.is_some())
                    .map(|r| (r.client, (r.epoch, r.rts, r.at)))
                    .collect(),
            };
            inject_linkage_adversary(
                &lines,
                &self.archive,
                &truth,
                a.linkage_samples.unwrap_or(100_000),
                self.cfg.sim.seed,
            )
        });
        let (safety_violations, unguarded_issuance) = self.late_issuance();
        let mut report = SimReport {
            seed: self.cfg.sim.seed,
            horizon: micros(self.cfg.sim.horizon),
            end: self.now,
            events: self.events,
            completed,
            pms,
            verifiers,
            accesses,
            safety_violations,
            unguarded_issuance,
            converged: self.converged(),
            revoked_grants: self.revoked_grants(&transcript),
            transcript,
            messages: self.messages.clone(),
            issuance: self.issuance.clone(),
            revocations: self.revocations.clone(),
            byzantine: self.byz_records.clone(),
            peak_daily_demand: self.peak_daily_demand,
            linkage,
            assertions: Vec::new(),
        };
        report.assertions = evaluate(&self.cfg.assertions, &report);
        report
    }
}

fn archive_filter(archive: &mut BTreeMap<u64, ErcSet>, f: &ErcSet) {
    match archive.get_mut(&f.epoch_id()) {
        Some(a) => {
            let _ = a.absorb(f);
        }
        None => {
            archive.insert(f.epoch_id(), f.clone());
        }
    }
}

fn check(name: &'static str, passed: bool, detail: String) -> AssertionResult {
    AssertionResult { name, passed, detail }
}

fn evaluate(a: &scenario::Assertions, r: &SimReport) -> Vec<AssertionResult> {
    let mut out = Vec::new();
    if a.safety {
        out.push(check("safety", r.safety_violations.is_empty(), format!("{} violations", r.safety_violations.len())));
    }
    if a.converged {
        out.push(check("converged", r.converged, String::new()));
    }
    if a.all_granted {
        let f = r.granted_fraction();
        out.push(check(
            "all_granted",
            !r.accesses.is_empty() && f == 1.0,
            format!("{} accesses, fraction {f:.6}", r.accesses.len()),
        ));
    }
    if let Some(min) = a.min_granted_fraction {
        let f = r.granted_fraction();
        out.push(check("min_granted_fraction", f >= min, format!("{f:.6} >= {min}")));
    }
    if a.safe_mode_seen {
        let n: u32 = r.verifiers.iter().map(|v| v.safe_mode_entries).sum();
        out.push(check("safe_mode_seen", n > 0, format!("{n} entries")));
    }
    if a.safe_mode_recovered {
        let ok = r.verifiers.iter().all(|v| v.safe_mode_exits >= v.safe_mode_entries);
        out.push(check("safe_mode_recovered", ok, String::new()));
    }
    if a.no_revoked_grants {
        out.push(check("no_revoked_grants", r.revoked_grants == 0, format!("{} grants", r.revoked_grants)));
    }
    if a.no_forgery_accepted {
        let n = r.forgeries_accepted();
        out.push(check("no_forgery_accepted", n == 0, format!("{n} accepted of {}", r.byzantine.len())));
    }
    if let Some(max) = a.max_revocation_latency {
        let bound = micros(max);
        let latencies: Vec<Option<u64>> =
            r.revocations.iter().filter(|x| x.accepted_at.is_some()).map(|x| x.max_latency()).collect();
        let ok = !latencies.is_empty() && latencies.iter().all(|l| l.is_some_and(|l| l <= bound));
        let shown: Vec<String> =
            latencies.iter().map(|l| l.map_or("never".into(), |l| format!("{:.3}s", l as f64 / 1e6))).collect();
        out.push(check("max_revocation_latency", ok, format!("[{}] <= {max}s", shown.join(" "))));
    }
    if let Some(min) = a.linkage_p_value_min {
        let p = r.linkage.as_ref().and_then(|l| l.pre_revocation).map(|t| t.p_value);
        out.push(check(
            "linkage_p_value_min",
            p.is_some_and(|p| p > min),
            p.map_or("no pre-revocation presentations".into(), |p| format!("p = {p:.6} > {min}")),
        ));
    }
    out
}

/// Runs a scenario to its horizon.
pub fn run_scenario(cfg: &SimConfig) -> Result<SimReport, SimError> {
    Sim::new(cfg)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimConfig {
        SimConfig::from_toml(
            r#"
            [sim]
            seed = 7
            horizon = 150.0
            pms = 4
            faults = 1
            verifiers = 2
            clients = 3
            [epoch]
            length = 60
            slot = 5
            pseudonyms = 6
            filter_bits = 4096
            filter_hashes = 5
            [network]
            delay = 0.05
            skew = 0.02
            verifier_pull = 2.0
            pull_timeout = 2.0
            [workload]
            trips_per_client = 3
            changes_per_trip = 4.0
            per_request = 6
            "#,
        )
        .unwrap()
    }

    #[test]
    fn quiet_run_grants_everything() {
        let mut cfg = small();
        cfg.assertions.all_granted = true;
        cfg.assertions.converged = true;
        let r = run_scenario(&cfg).unwrap();
        assert!(r.passed(), "{}", r.to_text());
        assert!(r.pms.iter().all(|p| p.epoch_now == 2));
    }

    #[test]
    fn deterministic() {
        let mut cfg = small();
        cfg.revocation.push(scenario::RevocationSpec { client: 1, at: 40.0 });
        let a = run_scenario(&cfg).unwrap();
        let b = run_scenario(&cfg).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        assert_eq!(a.csv_tables().unwrap(), b.csv_tables().unwrap());
    }

    #[test]
    fn revocation_reaches_every_verifier() {
        let mut cfg = small();
        cfg.revocation.push(scenario::RevocationSpec { client: 1, at: 30.0 });
        cfg.assertions.safety = true;
        cfg.assertions.converged = true;
        cfg.assertions.no_revoked_grants = true;
        cfg.assertions.max_revocation_latency = Some(10.0);
        let r = run_scenario(&cfg).unwrap();
        assert!(r.passed(), "{}", r.to_text());
        assert!(r.revocations[0].accepted_at.is_some());
        // client 1 gets nothing for epoch 2
        assert!(!r.issuance.iter().any(|i| i.client == 1 && i.epoch >= 2));
    }

    #[test]
    fn silent_acceptor_lets_the_client_through() {
        // PM0 takes the order and then drops everything it sends
        let mut cfg = small();
        cfg.revocation.push(scenario::RevocationSpec { client: 1, at: 30.0 });
        cfg.omission.push(scenario::OmissionSpec { pm: 0, drop: 1.0, mode: OmissionMode::Send });
        let r = run_scenario(&cfg).unwrap();
        assert!(r.safety_violations.is_empty());
        assert!(!r.unguarded_issuance.is_empty(), "{}", r.to_text());
    }

    #[test]
    fn budget_returns_partial_report() {
        let mut cfg = small();
        cfg.sim.event_budget = 50;
        match run_scenario(&cfg) {
            Err(SimError::Budget { partial, .. }) => {
                assert!(!partial.completed);
                assert_eq!(partial.events, 50);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn forged_capabilities_are_refused() {
        let mut cfg = small();
        cfg.byzantine.push(scenario::ByzantineSpec { client: 0, kind: ByzantineKind::Forge });
        cfg.byzantine.push(scenario::ByzantineSpec { client: 2, kind: ByzantineKind::Replay });
        cfg.assertions.no_forgery_accepted = true;
        let r = run_scenario(&cfg).unwrap();
        assert!(r.passed(), "{}", r.to_text());
        assert!(r.byzantine.iter().any(|b| b.kind == ByzantineKind::Forge));
    }
}
