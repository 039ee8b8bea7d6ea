//! Scenario files: TOML sections mirroring [`SimConfig`]. Durations are in
//! seconds; epoch geometry takes whole seconds, network timings may be
//! fractional.

use serde::Deserialize;
use thiserror::Error;

use crate::clock::{Timebase, MICROS_PER_SEC};
use crate::ercset::FilterParams;
use crate::slot_tree::EpochConfig;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ScenarioError> {
    Err(ScenarioError::Invalid(msg.into()))
}

pub fn micros(secs: f64) -> u64 {
    (secs * MICROS_PER_SEC as f64).round().max(0.0) as u64
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub seed: u64,
    pub horizon: f64,
    pub pms: u32,
    pub faults: u32,
    pub verifiers: u32,
    pub clients: u32,
    pub event_budget: u64,
    pub tick: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            seed: 1,
            horizon: 600.0,
            pms: 4,
            faults: 1,
            verifiers: 2,
            clients: 4,
            event_budget: 20_000_000,
            tick: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpochSection {
    pub length: u64,
    pub slot: u64,
    pub fanout: u32,
    pub pseudonyms: u32,
    pub filter_bits: u64,
    pub filter_hashes: u8,
}

impl Default for EpochSection {
    fn default() -> Self {
        EpochSection { length: 120, slot: 10, fanout: 2, pseudonyms: 8, filter_bits: 8192, filter_hashes: 7 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DelayMode {
    Uniform,
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    /// Δ: delay bound in stable periods.
    pub delay: f64,
    /// ε: clock skew bound; node offsets are drawn from `[−ε/2, ε/2]`.
    pub skew: f64,
    pub delay_mode: DelayMode,
    pub pull_timeout: f64,
    pub verifier_pull: f64,
    pub staleness: Option<f64>,
    pub prefetch: bool,
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection {
            delay: 0.1,
            skew: 0.05,
            delay_mode: DelayMode::Uniform,
            pull_timeout: 5.0,
            verifier_pull: 5.0,
            staleness: None,
            prefetch: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkloadSection {
    pub trips_per_client: u32,
    pub changes_per_trip: f64,
    pub peak_client: bool,
    /// Pseudonyms asked for per issuance request.
    pub per_request: u32,
    pub extra: u32,
    /// First access time; leaves room for the initial pulls.
    pub start: f64,
}

impl Default for WorkloadSection {
    fn default() -> Self {
        WorkloadSection {
            trips_per_client: 3,
            changes_per_trip: 5.0,
            peak_client: false,
            per_request: 8,
            extra: 2,
            start: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RevocationSpec {
    pub client: u32,
    pub at: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrashSpec {
    pub pm: u32,
    pub at: f64,
    pub recover: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OmissionMode {
    #[default]
    Both,
    Send,
    Receive,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmissionSpec {
    pub pm: u32,
    pub drop: f64,
    #[serde(default)]
    pub mode: OmissionMode,
}

/// `node` is `pmN` or `verifierN`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockSpec {
    pub node: String,
    pub at: f64,
    pub shift: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ByzantineKind {
    /// Presents capabilities endorsed by a key of its own.
    Forge,
    /// Presents the first capability it ever showed, again and again.
    Replay,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ByzantineSpec {
    pub client: u32,
    pub kind: ByzantineKind,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Assertions {
    pub safety: bool,
    pub converged: bool,
    pub all_granted: bool,
    pub safe_mode_seen: bool,
    pub safe_mode_recovered: bool,
    pub no_revoked_grants: bool,
    pub no_forgery_accepted: bool,
    /// Seconds from the revocation order to the slowest verifier learning it.
    pub max_revocation_latency: Option<f64>,
    pub min_granted_fraction: Option<f64>,
    pub linkage_p_value_min: Option<f64>,
    pub linkage_samples: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub sim: SimSection,
    pub epoch: EpochSection,
    pub network: NetworkSection,
    pub workload: WorkloadSection,
    pub revocation: Vec<RevocationSpec>,
    pub crash: Vec<CrashSpec>,
    pub omission: Vec<OmissionSpec>,
    pub clock: Vec<ClockSpec>,
    pub unstable: Vec<Window>,
    pub byzantine: Vec<ByzantineSpec>,
    #[serde(rename = "assert")]
    pub assertions: Assertions,
}

/// Which node a `[[clock]]` entry moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClockTarget {
    Pm(u32),
    Verifier(u32),
}

pub fn parse_clock_target(s: &str) -> Option<ClockTarget> {
    if let Some(n) = s.strip_prefix("pm") {
        return n.parse().ok().map(ClockTarget::Pm);
    }
    s.strip_prefix("verifier").and_then(|n| n.parse().ok()).map(ClockTarget::Verifier)
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let cfg: SimConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn geometry(&self) -> Result<EpochConfig, ScenarioError> {
        EpochConfig::new(0, self.epoch.length, self.epoch.slot, self.epoch.fanout)
            .map_err(|e| ScenarioError::Invalid(format!("epoch geometry: {e}")))
    }

    pub fn timebase(&self) -> Result<Timebase, ScenarioError> {
        Ok(Timebase::new(self.geometry()?))
    }

    pub fn filter_params(&self) -> Result<FilterParams, ScenarioError> {
        FilterParams::new(self.epoch.filter_bits, self.epoch.filter_hashes)
            .map_err(|e| ScenarioError::Invalid(format!("filter: {e}")))
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let s = &self.sim;
        if s.pms == 0 || s.verifiers == 0 {
            return invalid("need at least one PM and one verifier");
        }
        if s.faults >= s.pms {
            return invalid(format!("fault bound f={} must be below N={}", s.faults, s.pms));
        }
        if !(s.horizon > 0.0) || !(s.tick > 0.0) {
            return invalid("horizon and tick must be positive");
        }
        self.geometry()?;
        self.filter_params()?;
        if self.epoch.pseudonyms == 0 {
            return invalid("pseudonyms per epoch must be positive");
        }
        let n = &self.network;
        if !(n.delay >= 1e-6) || !(n.skew >= 0.0) || !(n.pull_timeout > 0.0) || !(n.verifier_pull > 0.0) {
            return invalid("network timings must be positive");
        }
        if self.workload.per_request == 0 {
            return invalid("per_request must be positive");
        }
        for r in &self.revocation {
            if r.client >= s.clients {
                return invalid(format!("revocation names unknown client {}", r.client));
            }
        }
        for c in &self.crash {
            if c.pm >= s.pms {
                return invalid(format!("crash names unknown pm {}", c.pm));
            }
            if c.recover.is_some_and(|r| r < c.at) {
                return invalid("recovery before crash");
            }
        }
        for o in &self.omission {
            if o.pm >= s.pms || !(0.0..=1.0).contains(&o.drop) {
                return invalid("omission needs a known pm and drop in [0, 1]");
            }
        }
        for c in &self.clock {
            match parse_clock_target(&c.node) {
                Some(ClockTarget::Pm(i)) if i < s.pms => {}
                Some(ClockTarget::Verifier(i)) if i < s.verifiers => {}
                _ => return invalid(format!("clock names unknown node {:?}", c.node)),
            }
        }
        for w in &self.unstable {
            if !(w.end > w.start) {
                return invalid("unstable window must end after it starts");
            }
        }
        for b in &self.byzantine {
            if b.client >= s.clients {
                return invalid(format!("byzantine names unknown client {}", b.client));
            }
        }
        Ok(())
    }
}
