//! Local measurements: capability verification latency against tree height
//! and thread count, and issuance throughput against batch size.
//!
//! Absolute numbers depend on the machine; only the trends are meaningful.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::clock::Timebase;
use crate::codec;
use crate::crypto::{det_key_gen, digest_parts, KeyPair};
use crate::ercset::FilterParams;
use crate::pm::TrustedZone;
use crate::pseudonym::{
    create_rrp, get_capability, verify_capability, verify_capability_parallel, Capability, ClientId,
};
use crate::slot_tree::EpochConfig;
use crate::wire::{EndorsementBundle, Message, RrpRequest, RrpResponse};

pub const HEIGHTS: [u8; 4] = [8, 11, 16, 32];
pub const BATCHES: [u32; 4] = [4, 8, 16, 32];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyRow {
    pub height: u8,
    pub threads: usize,
    pub samples: usize,
    pub mean_us: f64,
    pub median_us: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThroughputRow {
    pub batch: u32,
    pub requests: usize,
    pub mean_request_us: f64,
    pub pseudonyms_per_sec: f64,
}

fn bench_key(seed: u64, what: &[u8]) -> KeyPair {
    det_key_gen(&digest_parts(&[what, &seed.to_be_bytes()]))
}

/// Binary tree with exactly `2^height` one-second slots.
pub fn geometry_for_height(height: u8) -> EpochConfig {
    let slots = 1u64 << height;
    EpochConfig::new(0, slots, 1, 2).expect("height below the tree limit")
}

fn summarize(mut xs: Vec<f64>) -> (f64, f64) {
    xs.sort_by(f64::total_cmp);
    let mean = xs.iter().sum::<f64>() / xs.len().max(1) as f64;
    let median = xs.get(xs.len() / 2).copied().unwrap_or(0.0);
    (mean, median)
}

/// Time per `verifyCapability`; one thread uses the sequential check, more
/// threads split the signature checks across a pool of that size. Heights
/// are measured interleaved, sample by sample, so machine drift hits them
/// alike.
pub fn verify_latency(heights: &[u8], threads: &[usize], samples: usize, seed: u64) -> Vec<LatencyRow> {
    let pm = bench_key(seed, b"bench-pm");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = samples.max(1);
    let sets: Vec<(EpochConfig, Vec<(Capability, u64)>)> = heights
        .iter()
        .map(|&h| {
            let cfg = geometry_for_height(h);
            let caps = (0..samples)
                .map(|i| {
                    let cid = ClientId(digest_parts(&[b"bench-client", &(i as u64).to_be_bytes()]).0);
                    let rrp = create_rrp(cid, 0, 1, &pm, 1).expect("instance 1");
                    let slot = rng.gen_range(0..cfg.slots());
                    (get_capability(&rrp, slot, &cfg).expect("slot in range"), slot)
                })
                .collect();
            (cfg, caps)
        })
        .collect();
    let mut out = Vec::new();
    for &t in threads {
        let t = t.max(1);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(t).build().expect("thread pool");
        let check = |cfg: &EpochConfig, cap: &Capability, slot: u64| {
            if t == 1 {
                verify_capability(cap, &pm.public(), slot, cfg)
            } else {
                verify_capability_parallel(cap, &pm.public(), slot, cfg, &pool)
            }
        };
        // warm caches and the pool before timing
        for (cfg, caps) in &sets {
            for (cap, slot) in caps.iter().take(8) {
                std::hint::black_box(check(cfg, cap, *slot));
            }
        }
        let mut times = vec![Vec::with_capacity(samples); sets.len()];
        for i in 0..samples {
            for (j, (cfg, caps)) in sets.iter().enumerate() {
                let (cap, slot) = &caps[i];
                let start = Instant::now();
                let ok = check(cfg, cap, *slot);
                times[j].push(start.elapsed().as_secs_f64() * 1e6);
                assert!(ok, "benchmark capability must verify");
            }
        }
        for (&h, ts) in heights.iter().zip(times) {
            let (mean_us, median_us) = summarize(ts);
            out.push(LatencyRow { height: h, threads: t, samples, mean_us, median_us });
        }
    }
    out.sort_by_key(|r| (r.height, r.threads));
    out
}

/// Issuance throughput over the full request path: decode the request,
/// check the client, create and endorse `batch` pseudonyms, encode the
/// response. Each request comes from a freshly enrolled client.
pub fn issuance_throughput(batches: &[u32], requests: usize, seed: u64) -> Vec<ThroughputRow> {
    let pm = bench_key(seed, b"bench-pm");
    let admin = bench_key(seed, b"bench-admin");
    let cfg = EpochConfig::new(0, 86_400, 60, 2).expect("one-day epoch");
    let max_batch = batches.iter().copied().max().unwrap_or(1);
    let params = FilterParams::new(9 * 8192, 10).expect("static filter");
    let mut out = Vec::new();
    for &batch in batches {
        let mut zone = TrustedZone::new(pm.clone(), admin.public(), Timebase::new(cfg), params, max_batch, 0);
        let wire: Vec<Vec<u8>> = (0..requests.max(1))
            .map(|i| {
                let cid = ClientId(
                    digest_parts(&[b"bench-issue", &(batch as u64).to_be_bytes(), &(i as u64).to_be_bytes()]).0,
                );
                zone.enroll(cid, 0);
                let req = RrpRequest { cid, epoch_id: 0, count: batch, proof: None };
                codec::encode_message(&Message::RequestRrp(req)).expect("request encodes")
            })
            .collect();
        let start = Instant::now();
        let mut issued = 0usize;
        for bytes in &wire {
            let Ok(Message::RequestRrp(req)) = codec::decode_message(bytes) else { panic!("request decodes") };
            let items = zone.issue(&req, 1_000_000, 0).expect("fresh client is served");
            issued += items.len();
            let resp = RrpResponse::Issued(EndorsementBundle { epoch_id: 0, items });
            std::hint::black_box(codec::encode_message(&Message::RrpResponse(resp)).expect("response encodes"));
        }
        let secs = start.elapsed().as_secs_f64();
        out.push(ThroughputRow {
            batch,
            requests: wire.len(),
            mean_request_us: secs * 1e6 / wire.len() as f64,
            pseudonyms_per_sec: issued as f64 / secs,
        });
    }
    out
}

pub fn latency_csv(rows: &[LatencyRow]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["height", "threads", "samples", "mean_us", "median_us"])?;
    for r in rows {
        w.write_record([
            r.height.to_string(),
            r.threads.to_string(),
            r.samples.to_string(),
            format!("{:.3}", r.mean_us),
            format!("{:.3}", r.median_us),
        ])?;
    }
    finish(w)
}

pub fn throughput_csv(rows: &[ThroughputRow]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["batch", "requests", "mean_request_us", "pseudonyms_per_sec"])?;
    for r in rows {
        w.write_record([
            r.batch.to_string(),
            r.requests.to_string(),
            format!("{:.3}", r.mean_request_us),
            format!("{:.1}", r.pseudonyms_per_sec),
        ])?;
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, csv::Error> {
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("ascii fields"))
}

/// Trend checks over measured rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TrendCheck {
    /// Single-thread latency increases with height.
    pub latency_monotone: bool,
    /// Latency at the first height with 1 thread over latency with 4.
    pub speedup_4_threads: Option<f64>,
    pub throughput_monotone: bool,
}

pub fn trends(latency: &[LatencyRow], throughput: &[ThroughputRow]) -> TrendCheck {
    let mut single: Vec<&LatencyRow> = latency.iter().filter(|r| r.threads == 1).collect();
    single.sort_by_key(|r| r.height);
    let latency_monotone = single.windows(2).all(|w| w[1].median_us > w[0].median_us);
    let top = latency.iter().map(|r| r.height).max();
    let at = |t: usize| latency.iter().find(|r| Some(r.height) == top && r.threads == t).map(|r| r.median_us);
    let speedup_4_threads = at(1).zip(at(4)).map(|(one, four)| one / four);
    let mut tp: Vec<&ThroughputRow> = throughput.iter().collect();
    tp.sort_by_key(|r| r.batch);
    let throughput_monotone = tp.windows(2).all(|w| w[1].pseudonyms_per_sec >= w[0].pseudonyms_per_sec);
    TrendCheck { latency_monotone, speedup_4_threads, throughput_monotone }
}
