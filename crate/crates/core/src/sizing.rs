//! Filter sizing: expected insertions, false-positive rates, extra pseudonyms
//! and the comparison against slot-locked pseudonym schemes.

use thiserror::Error;

/// Bits per "KB" when reporting filter sizes.
pub const BITS_PER_KB: f64 = 8192.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SizingError {
    #[error("slot duration {delta} exceeds epoch length {epoch_len}")]
    SlotLongerThanEpoch { delta: f64, epoch_len: f64 },
    #[error("parameter {0} must be positive")]
    NonPositive(&'static str),
    #[error("revoked fraction must lie in [0, 1], got {0}")]
    Fraction(f64),
    #[error("target false-positive rate must lie in (0, 1), got {0}")]
    Target(f64),
    #[error("no filter up to {max_bits} bits reaches the target")]
    Unreachable { max_bits: u64 },
}

/// Deployment description used for sizing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeploymentParams {
    /// Number of clients `c_s`.
    pub clients: f64,
    /// Pseudonyms per client per epoch `I`.
    pub pseudonyms: f64,
    /// Fraction of pseudonyms revoked per epoch `f_r`.
    pub revoked_frac: f64,
    pub fanout: u32,
    /// Seconds.
    pub epoch_len: f64,
    /// Seconds.
    pub delta: f64,
    /// Pseudonyms a client needs for its accesses, `p`.
    pub needed: u32,
    /// Extra pseudonyms carried against false positives, `M`.
    pub extra: u32,
}

impl DeploymentParams {
    /// 250M clients, 10 pseudonyms/day, 1e-4 revocations/year, 10-minute
    /// slots in a one-day epoch, binary tree.
    pub fn us_fleet() -> Self {
        DeploymentParams {
            clients: 2.5e8,
            pseudonyms: 10.0,
            revoked_frac: 1e-4 / 365.0,
            fanout: 2,
            epoch_len: 86_400.0,
            delta: 600.0,
            needed: 10,
            extra: 0,
        }
    }

    pub fn validate(&self) -> Result<(), SizingError> {
        for (name, v) in [
            ("clients", self.clients),
            ("pseudonyms", self.pseudonyms),
            ("epoch_len", self.epoch_len),
            ("delta", self.delta),
        ] {
            if !(v > 0.0) {
                return Err(SizingError::NonPositive(name));
            }
        }
        if self.fanout < 2 {
            return Err(SizingError::NonPositive("fanout - 1"));
        }
        if !(0.0..=1.0).contains(&self.revoked_frac) {
            return Err(SizingError::Fraction(self.revoked_frac));
        }
        if self.delta > self.epoch_len {
            return Err(SizingError::SlotLongerThanEpoch { delta: self.delta, epoch_len: self.epoch_len });
        }
        Ok(())
    }

    /// Slot count `T = ceil(epoch / delta)`.
    pub fn slots(&self) -> u64 {
        (self.epoch_len / self.delta).ceil() as u64
    }

    /// Integer tree height `ceil(log_d T)`.
    pub fn tree_height(&self) -> u32 {
        ceil_log(self.slots(), self.fanout)
    }
}

/// Smallest `h` with `d^h >= t`.
pub fn ceil_log(t: u64, d: u32) -> u32 {
    let mut h = 0;
    let mut w: u128 = 1;
    while w < t as u128 {
        w *= d as u128;
        h += 1;
    }
    h
}

/// `n = c_s · I · f_r · log_d(epoch / delta)` with the real-valued logarithm.
pub fn expected_insertions(p: &DeploymentParams) -> Result<f64, SizingError> {
    p.validate()?;
    let log = (p.epoch_len / p.delta).ln() / (p.fanout as f64).ln();
    Ok(p.clients * p.pseudonyms * p.revoked_frac * log)
}

/// `(1 - (1 - 1/m)^(k n))^k`.
pub fn false_positive_rate(m: u64, k: u32, n: f64) -> f64 {
    if n <= 0.0 || m == 0 {
        return 0.0;
    }
    // (1 - 1/m)^(kn) via ln1p keeps precision for large m
    let miss = ((k as f64) * n * (-1.0 / m as f64).ln_1p()).exp();
    (1.0 - miss).powi(k as i32)
}

/// `1 - (1 - x)^h`: probability that at least one of `h` latchkeys hits.
pub fn capability_false_positive(x: f64, h: u32) -> f64 {
    -((-x).ln_1p() * h as f64).exp_m1()
}

fn ln_choose(n: u32, k: u32) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

/// `P[X >= extra + 1]` for `X ~ Binomial(needed + extra, q)`: the chance that
/// more uses fail than there are spare pseudonyms.
pub fn access_failure_probability(needed: u32, extra: u32, q: f64) -> f64 {
    let trials = needed + extra;
    if q <= 0.0 {
        return 0.0;
    }
    if q >= 1.0 {
        return 1.0;
    }
    let (lq, lnq) = (q.ln(), (-q).ln_1p());
    ((extra + 1)..=trials)
        .map(|j| (ln_choose(trials, j) + j as f64 * lq + (trials - j) as f64 * lnq).exp())
        .sum::<f64>()
        .min(1.0)
}

/// Probability that all `needed` accesses succeed with `extra` spares.
pub fn full_access_probability(needed: u32, extra: u32, q: f64) -> f64 {
    1.0 - access_failure_probability(needed, extra, q)
}

/// Failure term evaluated with the coefficient fixed at `C(p+M, M+1)` for
/// every `j`, as the closed form is usually printed. Kept for comparison with
/// [`access_failure_probability`].
pub fn access_failure_as_printed(needed: u32, extra: u32, q: f64) -> f64 {
    let trials = needed + extra;
    if q <= 0.0 {
        return 0.0;
    }
    let coeff = ln_choose(trials, extra + 1);
    let (lq, lnq) = (q.ln(), (-q).ln_1p());
    ((extra + 1)..=trials).map(|j| (coeff + j as f64 * lq + (trials - j) as f64 * lnq).exp()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizingResult {
    pub n: f64,
    pub m: u64,
    pub k: u32,
    pub x: f64,
    pub h: u32,
    pub p_fp_cap: f64,
    pub p_full_access: f64,
}

impl SizingResult {
    pub fn kilobytes(&self) -> f64 {
        self.m as f64 / BITS_PER_KB
    }
}

pub fn optimal_k(m: u64, n: f64) -> u32 {
    if n <= 0.0 {
        return 1;
    }
    ((m as f64 / n) * std::f64::consts::LN_2).round().max(1.0) as u32
}

const MAX_BITS: u64 = 1 << 46;

/// Smallest whole-byte filter whose optimal-`k` false-positive rate for `n`
/// items is at most `target`.
pub fn bits_for(n: f64, target: f64) -> Result<u64, SizingError> {
    if !(target > 0.0 && target < 1.0) {
        return Err(SizingError::Target(target));
    }
    let fp = |bytes: u64| {
        let m = bytes * 8;
        false_positive_rate(m, optimal_k(m, n), n)
    };
    if n <= 0.0 || fp(1) <= target {
        return Ok(8);
    }
    let mut hi = 2u64;
    while fp(hi) > target {
        hi *= 2;
        if hi * 8 > MAX_BITS {
            return Err(SizingError::Unreachable { max_bits: MAX_BITS });
        }
    }
    let mut lo = hi / 2;
    // fp(lo) > target >= fp(hi)
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if fp(mid) <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi * 8)
}

pub fn plan_filter(p: &DeploymentParams, target_fp: f64) -> Result<SizingResult, SizingError> {
    let n = expected_insertions(p)?;
    let m = bits_for(n, target_fp)?;
    let k = optimal_k(m, n);
    let x = false_positive_rate(m, k, n);
    let h = p.tree_height();
    let p_fp_cap = capability_false_positive(x, h);
    Ok(SizingResult { n, m, k, x, h, p_fp_cap, p_full_access: full_access_probability(p.needed, p.extra, p_fp_cap) })
}

/// Revocation-entry and client-storage counts for range-revocable versus
/// slot-locked pseudonyms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinearComparison {
    pub slots: u64,
    pub rrp_entries: u64,
    pub linear_entries: u64,
    pub rrp_client_pseudonyms: u64,
    pub linear_client_pseudonyms: u64,
}

/// `R·p·ceil(log_d T)` entries versus `R·p·T`; a single-slot epoch still
/// needs the one root latchkey per pseudonym.
pub fn compare_linear_scheme(revoked_clients: u64, needed: u64, slots: u64, fanout: u32) -> LinearComparison {
    let per_pseudonym = (ceil_log(slots, fanout) as u64).max(1);
    LinearComparison {
        slots,
        rrp_entries: revoked_clients * needed * per_pseudonym,
        linear_entries: revoked_clients * needed * slots,
        rrp_client_pseudonyms: needed,
        linear_client_pseudonyms: needed * slots,
    }
}

/// Pseudonym demand of the heaviest client in a taxi fleet that changes
/// pseudonym at every crossroad.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FleetDemand {
    pub per_day: f64,
    pub per_month: f64,
    pub per_year: f64,
    /// Shortest gap between two crossings, seconds (bounds per-slot demand).
    pub crossing_gap: f64,
}

pub const DAY: f64 = 86_400.0;
pub const MONTH: f64 = 30.0 * DAY;
pub const YEAR: f64 = 365.0 * DAY;

impl FleetDemand {
    /// Porto-like heaviest taxi: 692/day, 5677/month, 32142/year, at most one
    /// crossroad every 5 s (12 per minute).
    pub fn porto_like() -> Self {
        FleetDemand { per_day: 692.0, per_month: 5677.0, per_year: 32_142.0, crossing_gap: 5.0 }
    }

    /// Pseudonyms per epoch, interpolated linearly between the known points.
    pub fn per_epoch(&self, epoch_len: f64) -> f64 {
        let pts = [(0.0, 0.0), (DAY, self.per_day), (MONTH, self.per_month), (YEAR, self.per_year)];
        for w in pts.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if epoch_len <= x1 {
                return (y0 + (y1 - y0) * (epoch_len - x0) / (x1 - x0)).ceil();
            }
        }
        (self.per_year * epoch_len / YEAR).ceil()
    }

    /// Most pseudonyms one slot of length `delta` can need.
    pub fn per_slot(&self, delta: f64, epoch_len: f64) -> f64 {
        (delta / self.crossing_gap).ceil().min(self.per_epoch(epoch_len)).max(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StorageRow {
    pub delta: f64,
    pub epoch_len: f64,
    pub slots: u64,
    pub rrp_entries: f64,
    pub linear_entries: f64,
    pub rrp_bytes: u64,
    pub linear_bytes: u64,
}

/// Filter storage to revoke `revoked_clients` heavy clients under both schemes
/// at the same false-positive target.
pub fn storage_row(
    delta: f64,
    epoch_len: f64,
    demand: &FleetDemand,
    revoked_clients: f64,
    fanout: u32,
    target_fp: f64,
) -> Result<StorageRow, SizingError> {
    if !(delta > 0.0) || delta > epoch_len {
        return Err(SizingError::SlotLongerThanEpoch { delta, epoch_len });
    }
    let slots = (epoch_len / delta).ceil() as u64;
    let per_pseudonym = (ceil_log(slots, fanout) as f64).max(1.0);
    let rrp_entries = revoked_clients * demand.per_epoch(epoch_len) * per_pseudonym;
    let linear_entries = revoked_clients * demand.per_slot(delta, epoch_len) * slots as f64;
    Ok(StorageRow {
        delta,
        epoch_len,
        slots,
        rrp_entries,
        linear_entries,
        rrp_bytes: bits_for(rrp_entries, target_fp)? / 8,
        linear_bytes: bits_for(linear_entries, target_fp)? / 8,
    })
}
