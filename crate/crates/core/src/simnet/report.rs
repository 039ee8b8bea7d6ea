//! Simulation results: a deterministic text summary plus CSV tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::crypto::digest;
use crate::ercset::ErcSet;
use crate::pm::PmStats;
use crate::verifier::{Decision, TranscriptLine};

use super::client::AccessRecord;
use super::linkage::LinkageStats;
use super::scenario::ByzantineKind;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterDigest {
    pub epoch: u64,
    pub ones: u64,
    pub digest: String,
}

impl FilterDigest {
    pub fn of(set: &ErcSet) -> Self {
        FilterDigest {
            epoch: set.epoch_id(),
            ones: set.filter.count_ones(),
            digest: hex::encode(&digest(set.filter.bits()).0[..8]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PmSummary {
    pub id: u32,
    pub epoch_now: u64,
    pub quarantine: bool,
    pub correct: bool,
    pub crashed: bool,
    pub stats: PmStats,
    pub filters: Vec<FilterDigest>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VerifierSummary {
    pub id: u32,
    pub granted: u64,
    pub denied: BTreeMap<&'static str, u64>,
    pub safe_mode_entries: u32,
    pub safe_mode_exits: u32,
    pub last_pull: Option<u64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MessageCount {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IssueRecord {
    pub at: u64,
    pub pm: u32,
    pub client: u32,
    pub epoch: u64,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RevocationRecord {
    pub client: u32,
    pub epoch: u64,
    pub rts: u64,
    pub at: u64,
    pub accepted_at: Option<u64>,
    /// Per verifier, simulated time at which its filter first revoked the
    /// client.
    pub learned: Vec<Option<u64>>,
}

impl RevocationRecord {
    pub fn max_latency(&self) -> Option<u64> {
        self.learned.iter().map(|l| l.map(|t| t.saturating_sub(self.at))).collect::<Option<Vec<_>>>()?.into_iter().max()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ByzRecord {
    pub at: u64,
    pub client: u32,
    pub kind: ByzantineKind,
    pub decision: Decision,
    /// Replays only: this grant came more than a slot after capture.
    pub stale_grant: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssertionResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub seed: u64,
    pub horizon: u64,
    pub end: u64,
    pub events: u64,
    pub completed: bool,
    pub pms: Vec<PmSummary>,
    pub verifiers: Vec<VerifierSummary>,
    pub accesses: Vec<AccessRecord>,
    pub transcript: Vec<(u32, TranscriptLine)>,
    pub messages: BTreeMap<&'static str, MessageCount>,
    pub issuance: Vec<IssueRecord>,
    pub revocations: Vec<RevocationRecord>,
    pub byzantine: Vec<ByzRecord>,
    pub safety_violations: Vec<String>,
    /// Late issuance after an order whose acceptor was faulty; outside the
    /// guarantee, reported for information.
    pub unguarded_issuance: Vec<String>,
    pub converged: bool,
    pub revoked_grants: u64,
    pub peak_daily_demand: u64,
    pub linkage: Option<LinkageStats>,
    pub assertions: Vec<AssertionResult>,
}

fn secs(us: u64) -> String {
    format!("{}.{:06}", us / 1_000_000, us % 1_000_000)
}

fn opt_secs(us: Option<u64>) -> String {
    us.map_or_else(|| "-".to_string(), secs)
}

impl SimReport {
    pub fn passed(&self) -> bool {
        self.completed && self.assertions.iter().all(|a| a.passed)
    }

    pub fn granted_fraction(&self) -> f64 {
        let granted = self.accesses.iter().filter(|a| a.outcome.label() == "granted").count();
        granted as f64 / self.accesses.len().max(1) as f64
    }

    pub fn forgeries_accepted(&self) -> usize {
        self.byzantine
            .iter()
            .filter(|b| b.decision.is_granted() && (b.kind == ByzantineKind::Forge || b.stale_grant))
            .count()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "seed {}", self.seed);
        let _ = writeln!(
            s,
            "horizon {} end {} events {} completed {}",
            secs(self.horizon),
            secs(self.end),
            self.events,
            self.completed
        );
        let _ = writeln!(s, "\n[pms]");
        for p in &self.pms {
            let filters: Vec<String> =
                p.filters.iter().map(|f| format!("e{}:{}:{}", f.epoch, f.ones, f.digest)).collect();
            let st = &p.stats;
            let _ = writeln!(
                s,
                "pm{} epoch {} {} {} issued {} denied {} revocations {} pushes {} pulls {} quarantines {} mismatched {} filters {}",
                p.id,
                p.epoch_now,
                if p.quarantine { "quarantine" } else { "serving" },
                if p.crashed { "crashed" } else if p.correct { "correct" } else { "faulty" },
                st.issued,
                st.denied,
                st.revocations,
                st.pushes,
                st.pulls,
                st.quarantines,
                st.dropped_mismatch,
                filters.join(" ")
            );
        }
        let _ = writeln!(s, "\n[verifiers]");
        for v in &self.verifiers {
            let denied: Vec<String> = v.denied.iter().map(|(k, n)| format!("{k}={n}")).collect();
            let _ = writeln!(
                s,
                "v{} granted {} denied [{}] safe_mode_entries {} exits {} last_pull {}",
                v.id,
                v.granted,
                denied.join(" "),
                v.safe_mode_entries,
                v.safe_mode_exits,
                opt_secs(v.last_pull)
            );
        }
        let _ = writeln!(s, "\n[workload]");
        let mut outcomes: BTreeMap<&str, u64> = BTreeMap::new();
        for a in &self.accesses {
            *outcomes.entry(a.outcome.label()).or_default() += 1;
        }
        let o: Vec<String> = outcomes.iter().map(|(k, n)| format!("{k}={n}")).collect();
        let _ = writeln!(
            s,
            "accesses {} [{}] granted_fraction {:.6}",
            self.accesses.len(),
            o.join(" "),
            self.granted_fraction()
        );
        let _ = writeln!(s, "peak_daily_demand {}", self.peak_daily_demand);
        let _ = writeln!(s, "issuance_records {}", self.issuance.len());
        if !self.byzantine.is_empty() {
            let _ = writeln!(
                s,
                "byzantine_presentations {} accepted_forgeries {}",
                self.byzantine.len(),
                self.forgeries_accepted()
            );
        }
        let _ = writeln!(s, "\n[messages]");
        for (k, m) in &self.messages {
            let _ =
                writeln!(s, "{k} sent {} delivered {} dropped {} bytes {}", m.sent, m.delivered, m.dropped, m.bytes);
        }
        let _ = writeln!(s, "\n[revocations]");
        for r in &self.revocations {
            let learned: Vec<String> = r.learned.iter().map(|l| opt_secs(*l)).collect();
            let _ = writeln!(
                s,
                "client {} epoch {} rts {} at {} accepted {} learned [{}] max_latency {}",
                r.client,
                r.epoch,
                r.rts,
                secs(r.at),
                opt_secs(r.accepted_at),
                learned.join(" "),
                opt_secs(r.max_latency())
            );
        }
        let _ = writeln!(s, "\n[safety]");
        let _ = writeln!(s, "violations {}", self.safety_violations.len());
        for v in &self.safety_violations {
            let _ = writeln!(s, "  {v}");
        }
        let _ = writeln!(s, "unguarded_issuance {}", self.unguarded_issuance.len());
        let _ = writeln!(s, "converged {}", self.converged);
        let _ = writeln!(s, "revoked_grants {}", self.revoked_grants);
        if let Some(l) = &self.linkage {
            let _ = writeln!(s, "\n[linkage]");
            let _ = writeln!(
                s,
                "presentations {} pairs {} same_client_pairs {} by_key {} by_latchkey {} by_hits {} false_links {} cross_pseudonym {}",
                l.presentations,
                l.pairs,
                l.same_client_pairs,
                l.linked_by_key,
                l.linked_by_latchkey,
                l.linked_by_hits,
                l.false_links,
                l.cross_pseudonym_links
            );
            if let Some(t) = &l.pre_revocation {
                let _ = writeln!(
                    s,
                    "pre_revocation_hits {}/{} random_hits {}/{} p_value {:.6}",
                    t.sample_hits, t.samples, t.random_hits, t.randoms, t.p_value
                );
            }
        }
        let _ = writeln!(s, "\n[assertions]");
        for a in &self.assertions {
            let _ = writeln!(s, "{} {} {}", if a.passed { "PASS" } else { "FAIL" }, a.name, a.detail);
        }
        s
    }

    /// `(file stem, CSV text)` pairs, each with a header row.
    pub fn csv_tables(&self) -> Result<Vec<(&'static str, String)>, csv::Error> {
        let mut out = Vec::new();

        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["verifier", "at_us", "pseudonym", "slot", "decision", "reason"])?;
        for (v, l) in &self.transcript {
            let (decision, reason) = match l.decision {
                Decision::Granted => ("granted", "-"),
                Decision::Denied(r) => ("denied", r.as_str()),
            };
            let slot = l.slot.map_or_else(|| "-".to_string(), |s| s.to_string());
            w.write_record([
                v.to_string(),
                l.at.to_string(),
                l.pseudonym_pub.to_hex(),
                slot,
                decision.into(),
                reason.into(),
            ])?;
        }
        out.push(("transcript", finish(w)?));

        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["client", "at_us", "finished_us", "outcome"])?;
        for a in &self.accesses {
            w.write_record([a.client.to_string(), a.at.to_string(), a.finished.to_string(), a.outcome.label().into()])?;
        }
        out.push(("accesses", finish(w)?));

        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["kind", "sent", "delivered", "dropped", "bytes"])?;
        for (k, m) in &self.messages {
            w.write_record([
                k.to_string(),
                m.sent.to_string(),
                m.delivered.to_string(),
                m.dropped.to_string(),
                m.bytes.to_string(),
            ])?;
        }
        out.push(("messages", finish(w)?));

        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["at_us", "pm", "client", "epoch", "count"])?;
        for r in &self.issuance {
            w.write_record([
                r.at.to_string(),
                r.pm.to_string(),
                r.client.to_string(),
                r.epoch.to_string(),
                r.count.to_string(),
            ])?;
        }
        out.push(("issuance", finish(w)?));

        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["client", "epoch", "rts", "at_us", "accepted_us", "verifier", "learned_us", "latency_us"])?;
        for r in &self.revocations {
            for (v, l) in r.learned.iter().enumerate() {
                w.write_record([
                    r.client.to_string(),
                    r.epoch.to_string(),
                    r.rts.to_string(),
                    r.at.to_string(),
                    r.accepted_at.map_or_else(String::new, |t| t.to_string()),
                    v.to_string(),
                    l.map_or_else(String::new, |t| t.to_string()),
                    l.map_or_else(String::new, |t| t.saturating_sub(r.at).to_string()),
                ])?;
            }
        }
        out.push(("revocations", finish(w)?));
        Ok(out)
    }
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, csv::Error> {
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv of ascii fields"))
}
