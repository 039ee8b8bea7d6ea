//! Synthetic access workload: each client drives trips and changes pseudonym
//! at every crossroad it passes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::clock::MICROS_PER_SEC;

/// Accesses per day of the heaviest client.
pub const PEAK_DAILY_DEMAND: u64 = 692;

const DAY_US: u64 = 86_400 * MICROS_PER_SEC;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceParams {
    pub clients: u32,
    pub trips_per_client: u32,
    /// Mean crossroads per trip; trip lengths are heavy-tailed around it.
    pub changes_per_trip: f64,
    /// Accesses are generated in `[start, horizon)` microseconds.
    pub start: u64,
    pub horizon: u64,
    /// Client 0 replaced by a client that needs exactly the peak demand per day.
    pub peak_client: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Access {
    pub at: u64,
    pub client: u32,
}

/// Pareto with shape 2 scaled to the requested mean, at least one crossing.
fn trip_length(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    let shape = 2.0;
    let scale = mean * (shape - 1.0) / shape;
    let u: f64 = rng.gen_range(f64::EPSILON..1.0);
    (scale / u.powf(1.0 / shape)).round().max(1.0) as u64
}

/// Sorted by time, then client.
pub fn generate_trace(p: &TraceParams) -> Vec<Access> {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut out = Vec::new();
    if p.horizon <= p.start {
        return out;
    }
    let span = p.horizon - p.start;
    for client in 0..p.clients {
        if client == 0 && p.peak_client {
            out.extend(peak_accesses(&mut rng, p.start, p.horizon));
            continue;
        }
        for _ in 0..p.trips_per_client {
            let mut t = p.start + rng.gen_range(0..span);
            for _ in 0..trip_length(&mut rng, p.changes_per_trip.max(1.0)) {
                if t >= p.horizon {
                    break;
                }
                out.push(Access { at: t, client });
                t += rng.gen_range(5..=60) * MICROS_PER_SEC;
            }
        }
    }
    out.sort();
    out
}

/// Exactly [`PEAK_DAILY_DEMAND`] accesses in every whole day, and the
/// proportional share of a partial day.
fn peak_accesses(rng: &mut ChaCha8Rng, start: u64, horizon: u64) -> Vec<Access> {
    let mut out = Vec::new();
    let mut day = start;
    while day < horizon {
        let end = (day + DAY_US).min(horizon);
        let n = (PEAK_DAILY_DEMAND as u128 * (end - day) as u128 / DAY_US as u128) as u64;
        let gap = (end - day) / n.max(1);
        for i in 0..n {
            let jitter = if gap > 1 { rng.gen_range(0..gap / 2) } else { 0 };
            out.push(Access { at: day + i * gap + jitter, client: 0 });
        }
        day = end;
    }
    out
}

/// Largest number of accesses one client makes within a day-aligned window.
pub fn max_daily_demand(trace: &[Access]) -> u64 {
    let mut counts = std::collections::BTreeMap::new();
    for a in trace {
        *counts.entry((a.client, a.at / DAY_US)).or_insert(0u64) += 1;
    }
    counts.values().copied().max().unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> TraceParams {
        TraceParams {
            clients: 20,
            trips_per_client: 3,
            changes_per_trip: 6.0,
            start: 0,
            horizon: DAY_US,
            peak_client: false,
            seed: 5,
        }
    }

    #[test]
    fn zero_trips_is_empty() {
        let mut p = params();
        p.trips_per_client = 0;
        assert!(generate_trace(&p).is_empty());
    }

    #[test]
    fn deterministic_and_sorted() {
        let a = generate_trace(&params());
        assert_eq!(a, generate_trace(&params()));
        assert!(a.windows(2).all(|w| w[0] <= w[1]));
        let mut other = params();
        other.seed = 6;
        assert_ne!(a, generate_trace(&other));
    }

    #[test]
    fn crossings_are_spaced() {
        let trace = generate_trace(&TraceParams { trips_per_client: 1, ..params() });
        for c in 0..20 {
            let times: Vec<u64> = trace.iter().filter(|a| a.client == c).map(|a| a.at).collect();
            assert!(times.windows(2).all(|w| w[1] - w[0] >= 5 * MICROS_PER_SEC));
        }
    }

    #[test]
    fn peak_client_demand() {
        let trace = generate_trace(&TraceParams { peak_client: true, ..params() });
        assert_eq!(trace.iter().filter(|a| a.client == 0).count() as u64, PEAK_DAILY_DEMAND);
        assert_eq!(max_daily_demand(&trace), PEAK_DAILY_DEMAND);
        let two_days = generate_trace(&TraceParams { peak_client: true, clients: 1, horizon: 2 * DAY_US, ..params() });
        assert_eq!(two_days.len() as u64, 2 * PEAK_DAILY_DEMAND);
    }

    #[test]
    fn trip_lengths_are_heavy_tailed() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let lens: Vec<u64> = (0..20_000).map(|_| trip_length(&mut rng, 10.0)).collect();
        let mean = lens.iter().sum::<u64>() as f64 / lens.len() as f64;
        assert!((mean - 10.0).abs() < 1.5, "mean {mean}");
        assert!(*lens.iter().max().unwrap() > 100);
    }
}
