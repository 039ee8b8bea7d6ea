//! Small-model safety sweep: every topology with N ≤ 5 PMs and f = 1, every
//! crash subset of size ≤ f at several instants, and a fixed set of delay
//! schedules.

use rayon::prelude::*;

use super::scenario::{CrashSpec, DelayMode, RevocationSpec, SimConfig};
use super::{run_scenario, SimError};

const BASE: &str = r#"
[sim]
horizon = 150.0
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
pull_timeout = 2.0
verifier_pull = 2.0
[workload]
trips_per_client = 3
changes_per_trip = 4.0
per_request = 6
[assert]
safety = true
converged = true
"#;

pub fn base_config() -> SimConfig {
    SimConfig::from_toml(BASE).expect("built-in sweep scenario")
}

/// Revocation instants: mid-epoch, and just before the boundary so the
/// order races the transition.
pub const REVOCATION_TIMES: [f64; 2] = [30.0, 59.9];

/// `(label, config)` for every schedule of the sweep.
pub fn safety_schedules(max_pms: u32) -> Vec<(String, SimConfig)> {
    let delays = [(DelayMode::Min, 1u64), (DelayMode::Max, 1), (DelayMode::Uniform, 1), (DelayMode::Uniform, 2)];
    let mut out = Vec::new();
    for pms in 2..=max_pms {
        for &rev_at in &REVOCATION_TIMES {
            let mut crash_plans: Vec<Option<CrashSpec>> = vec![None];
            for pm in 0..pms {
                // before the order, while it is gossiped, and at the boundary
                for at in [rev_at - 1.0, rev_at + 0.05, 59.95] {
                    crash_plans.push(Some(CrashSpec { pm, at, recover: None }));
                }
            }
            for crash in &crash_plans {
                for &(mode, seed) in &delays {
                    let mut cfg = base_config();
                    cfg.sim.pms = pms;
                    cfg.sim.faults = 1;
                    cfg.sim.seed = seed;
                    cfg.network.delay_mode = mode;
                    cfg.revocation = vec![RevocationSpec { client: 1, at: rev_at }];
                    cfg.crash = crash.iter().cloned().collect();
                    let crash_label =
                        crash.as_ref().map_or_else(|| "none".to_string(), |c| format!("pm{}@{}", c.pm, c.at));
                    let label = format!("N={pms} rev@{rev_at} crash={crash_label} delay={mode:?}/{seed}");
                    out.push((label, cfg));
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SweepSummary {
    pub runs: usize,
    pub violations: usize,
    pub not_converged: usize,
    pub accepted_revocations: usize,
    pub failures: Vec<String>,
}

pub fn run_sweep(schedules: &[(String, SimConfig)]) -> Result<SweepSummary, SimError> {
    let results: Vec<_> = schedules.par_iter().map(|(label, cfg)| run_scenario(cfg).map(|r| (label, r))).collect();
    let mut s = SweepSummary::default();
    for res in results {
        let (label, r) = res?;
        s.runs += 1;
        s.violations += r.safety_violations.len();
        s.not_converged += usize::from(!r.converged);
        s.accepted_revocations += r.revocations.iter().filter(|x| x.accepted_at.is_some()).count();
        if !r.passed() {
            s.failures.push(label.clone());
        }
    }
    Ok(s)
}
