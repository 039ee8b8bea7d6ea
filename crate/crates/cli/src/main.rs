//! `rrp`: sizing calculator, scenario runner, benchmarks and key tooling.
//!
//! Exit codes: 0 success, 1 assertion or gate failure, 2 usage or config
//! error.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rrp_core::bench;
use rrp_core::codec;
use rrp_core::crypto::{det_key_gen, digest, digest_parts, KeyPair, Seed};
use rrp_core::pseudonym::{create_rrp, get_capability, verify_capability, ClientId};
use rrp_core::simnet::{run_scenario, SimConfig, SimError, SimReport};
use rrp_core::sizing::{self, DeploymentParams, FleetDemand};
use rrp_core::slot_tree::EpochConfig;

use config::FileConfig;

#[derive(Parser, Debug)]
#[command(name = "rrp", version, about = "Range-revocable pseudonyms: sizing, simulation, benchmarks and key tooling")]
struct Cli {
    /// TOML file with one table per subcommand holding default flag values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for keys, simulations and benchmarks; overrides a scenario's own seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Directory for report and CSV files.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Largest worker pool for `bench`.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Filter sizing, extra pseudonyms and the slot-locked comparison.
    Size(SizeArgs),
    /// Run a scenario file.
    Simulate(SimulateArgs),
    /// Verification latency and issuance throughput on this machine.
    Bench(BenchArgs),
    /// Revocation storage for range-revocable versus slot-locked pseudonyms.
    StorageCompare(StorageArgs),
    /// Derive a PM key pair.
    Keygen(KeygenArgs),
    /// Create a pseudonym and one capability, encoded for the wire.
    Pseudonym(PseudonymArgs),
}

#[derive(Args, Debug)]
struct SizeArgs {
    #[arg(long)]
    clients: Option<f64>,
    /// Pseudonyms per client per epoch.
    #[arg(long)]
    pseudos: Option<f64>,
    /// Fraction of pseudonyms revoked per epoch.
    #[arg(long)]
    revoked_frac: Option<f64>,
    /// Slots per epoch; overrides --delta.
    #[arg(long)]
    slots: Option<u64>,
    /// Epoch length in seconds.
    #[arg(long)]
    epoch_len: Option<f64>,
    /// Slot length in seconds.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    fanout: Option<u32>,
    /// Pseudonyms a client needs per epoch.
    #[arg(long)]
    needed: Option<u32>,
    /// Extra pseudonyms carried against false positives.
    #[arg(long)]
    extra: Option<u32>,
    #[arg(long)]
    target_fp: Option<f64>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Scenario file (TOML sections).
    scenario: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Capabilities verified per (height, threads) cell.
    #[arg(long)]
    samples: Option<usize>,
    /// Issuance requests per batch size.
    #[arg(long)]
    requests: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    heights: Option<Vec<u8>>,
    #[arg(long, value_delimiter = ',')]
    batches: Option<Vec<u32>>,
    /// Fail (exit 1) when a trend gate does not hold.
    #[arg(long)]
    gate: bool,
}

#[derive(Args, Debug)]
struct StorageArgs {
    /// Slot lengths in seconds.
    #[arg(long, value_delimiter = ',')]
    deltas: Option<Vec<f64>>,
    /// Epoch lengths: seconds or day, month, year.
    #[arg(long, value_delimiter = ',')]
    epochs: Option<Vec<String>>,
    /// Heavy clients revoked per epoch.
    #[arg(long)]
    revoked: Option<f64>,
    #[arg(long)]
    fanout: Option<u32>,
    #[arg(long)]
    target_fp: Option<f64>,
}

#[derive(Args, Debug)]
struct KeygenArgs {
    /// Label mixed into the key derivation.
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args, Debug)]
struct PseudonymArgs {
    /// PM signing seed, 64 hex digits; defaults to the `keygen` key.
    #[arg(long)]
    pm_seed: Option<String>,
    /// Client identifier; hashed to 32 bytes.
    #[arg(long)]
    client: String,
    #[arg(long)]
    epoch: Option<u64>,
    #[arg(long)]
    instance: Option<u32>,
    #[arg(long)]
    slot: Option<u64>,
    #[arg(long)]
    epoch_len: Option<u64>,
    #[arg(long)]
    delta: Option<u64>,
    #[arg(long)]
    fanout: Option<u32>,
    #[arg(long)]
    pseudonyms: Option<u32>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Failed(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Usage(_) => 2,
        }
    }
}

type CliResult = Result<(), CliError>;

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn write_out(dir: Option<&Path>, name: &str, contents: &str) -> CliResult {
    let Some(dir) = dir else { return Ok(()) };
    fs::create_dir_all(dir).map_err(|e| usage(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RRP_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Usage(m) => eprintln!("error: {m}"),
                CliError::Failed(m) => eprintln!("{m}"),
            }
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> CliResult {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p).map_err(usage)?,
        None => FileConfig::default(),
    };
    let out = cli.out.as_deref();
    match cli.cmd {
        Command::Size(a) => cmd_size(&a, &file, out),
        Command::Simulate(a) => cmd_simulate(&a, &file, cli.seed, out),
        Command::Bench(a) => cmd_bench(&a, &file, cli.seed, cli.threads, out),
        Command::StorageCompare(a) => cmd_storage(&a, &file, out),
        Command::Keygen(a) => cmd_keygen(&a, &file, cli.seed, out),
        Command::Pseudonym(a) => cmd_pseudonym(&a, &file, cli.seed),
    }
}

fn cmd_size(a: &SizeArgs, f: &FileConfig, out: Option<&Path>) -> CliResult {
    let base = DeploymentParams::us_fleet();
    let s = "size";
    let epoch_len = f.pick(a.epoch_len, s, "epoch_len", base.epoch_len)?;
    let slots: Option<u64> = f.pick_opt(a.slots, s, "slots")?;
    let delta = match slots {
        Some(0) => return Err(usage("--slots must be positive")),
        Some(t) => epoch_len / t as f64,
        None => f.pick(a.delta, s, "delta", base.delta)?,
    };
    let p = DeploymentParams {
        clients: f.pick(a.clients, s, "clients", base.clients)?,
        pseudonyms: f.pick(a.pseudos, s, "pseudos", base.pseudonyms)?,
        revoked_frac: f.pick(a.revoked_frac, s, "revoked_frac", base.revoked_frac)?,
        fanout: f.pick(a.fanout, s, "fanout", base.fanout)?,
        epoch_len,
        delta,
        needed: f.pick(a.needed, s, "needed", base.needed)?,
        extra: f.pick(a.extra, s, "extra", base.extra)?,
    };
    let target = f.pick(a.target_fp, s, "target_fp", 0.001)?;
    p.validate().map_err(usage)?;
    let r = sizing::plan_filter(&p, target).map_err(usage)?;
    let revoked_clients = (p.clients * p.revoked_frac).ceil() as u64;
    let cmp = sizing::compare_linear_scheme(revoked_clients, p.needed as u64, p.slots(), p.fanout);
    let rows: Vec<(&str, String)> = vec![
        ("clients", format!("{}", p.clients)),
        ("pseudonyms_per_epoch", format!("{}", p.pseudonyms)),
        ("revoked_frac", format!("{:e}", p.revoked_frac)),
        ("epoch_len_s", format!("{}", p.epoch_len)),
        ("delta_s", format!("{}", p.delta)),
        ("slots", p.slots().to_string()),
        ("fanout", p.fanout.to_string()),
        ("tree_height", r.h.to_string()),
        ("target_fp", format!("{target}")),
        ("n_insertions", format!("{:.1}", r.n)),
        ("m_bits", r.m.to_string()),
        ("m_kb", format!("{:.2}", r.kilobytes())),
        ("k_hashes", r.k.to_string()),
        ("p_fp_latchkey", format!("{:.6e}", r.x)),
        ("p_fp_capability", format!("{:.6e}", r.p_fp_cap)),
        ("needed", p.needed.to_string()),
        ("extra", p.extra.to_string()),
        ("p_full_access", format!("{:.12}", r.p_full_access)),
        ("p_access_failure", format!("{:.6e}", sizing::access_failure_probability(p.needed, p.extra, r.p_fp_cap))),
        ("revoked_clients", revoked_clients.to_string()),
        ("rrp_entries", cmp.rrp_entries.to_string()),
        ("slot_locked_entries", cmp.linear_entries.to_string()),
        ("rrp_client_pseudonyms", cmp.rrp_client_pseudonyms.to_string()),
        ("slot_locked_client_pseudonyms", cmp.linear_client_pseudonyms.to_string()),
    ];
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    for (k, v) in &rows {
        println!("{k:<width$}  {v}");
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["metric", "value"]).map_err(usage)?;
    for (k, v) in &rows {
        w.write_record([*k, v.as_str()]).map_err(usage)?;
    }
    let text = String::from_utf8(w.into_inner().map_err(usage)?).map_err(usage)?;
    write_out(out, "size.csv", &text)
}

fn load_scenario(a: &SimulateArgs, f: &FileConfig) -> Result<SimConfig, CliError> {
    let path = match (&a.scenario, f.path_of("simulate", "scenario")?) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => p,
        (None, None) => return Err(usage("simulate needs a scenario file")),
    };
    let text = fs::read_to_string(&path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    SimConfig::from_toml(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn emit_report(report: &SimReport, out: Option<&Path>) -> CliResult {
    let text = report.to_text();
    print!("{text}");
    write_out(out, "report.txt", &text)?;
    for (name, csv) in report.csv_tables().map_err(usage)? {
        write_out(out, &format!("{name}.csv"), &csv)?;
    }
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs, f: &FileConfig, seed: Option<u64>, out: Option<&Path>) -> CliResult {
    let mut cfg = load_scenario(a, f)?;
    if let Some(s) = seed {
        cfg.sim.seed = s;
    }
    match run_scenario(&cfg) {
        Ok(report) => {
            emit_report(&report, out)?;
            if report.passed() {
                Ok(())
            } else {
                Err(CliError::Failed("scenario assertions failed".into()))
            }
        }
        Err(SimError::Budget { budget, at, partial }) => {
            emit_report(&partial, out)?;
            Err(CliError::Failed(format!("event budget of {budget} exhausted at {at} us; partial report above")))
        }
        Err(SimError::Scenario(e)) => Err(usage(e)),
    }
}

fn cmd_bench(
    a: &BenchArgs,
    f: &FileConfig,
    seed: Option<u64>,
    threads: Option<usize>,
    out: Option<&Path>,
) -> CliResult {
    let b = "bench";
    let samples = f.pick(a.samples, b, "samples", 200usize)?;
    let requests = f.pick(a.requests, b, "requests", 200usize)?;
    let heights = f.pick(a.heights.clone(), b, "heights", bench::HEIGHTS.to_vec())?;
    let batches = f.pick(a.batches.clone(), b, "batches", bench::BATCHES.to_vec())?;
    if heights.iter().any(|h| *h == 0 || *h > 62) || batches.contains(&0) || samples == 0 || requests == 0 {
        return Err(usage("heights must be in 1..=62, batches and counts positive"));
    }
    let max_threads = f.pick(threads, b, "threads", 4usize)?.max(1);
    let mut pools: Vec<usize> = [1, 2, 4, max_threads].into_iter().filter(|t| *t <= max_threads).collect();
    pools.sort_unstable();
    pools.dedup();
    let seed = seed.unwrap_or(1);
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    println!("available cores: {cores}");
    let lat = bench::verify_latency(&heights, &pools, samples, seed);
    let tp = bench::issuance_throughput(&batches, requests, seed);
    let lat_csv = bench::latency_csv(&lat).map_err(usage)?;
    let tp_csv = bench::throughput_csv(&tp).map_err(usage)?;
    print!("{lat_csv}\n{tp_csv}");
    write_out(out, "bench_latency.csv", &lat_csv)?;
    write_out(out, "bench_throughput.csv", &tp_csv)?;
    let t = bench::trends(&lat, &tp);
    let speed = t.speedup_4_threads.map_or("n/a".to_string(), |s| format!("{s:.2}"));
    println!(
        "latency_monotone {} speedup_1_to_4 {speed} throughput_monotone {}",
        t.latency_monotone, t.throughput_monotone
    );
    if a.gate {
        let speedup_ok = t.speedup_4_threads.is_some_and(|s| s >= 1.6);
        if !(t.latency_monotone && speedup_ok && t.throughput_monotone) {
            return Err(CliError::Failed(format!("trend gate failed on {cores} core(s)")));
        }
    }
    Ok(())
}

fn parse_epoch(s: &str) -> Result<f64, CliError> {
    match s.trim() {
        "day" => Ok(sizing::DAY),
        "month" => Ok(sizing::MONTH),
        "year" => Ok(sizing::YEAR),
        other => {
            other.parse::<f64>().ok().filter(|v| *v > 0.0).ok_or_else(|| usage(format!("bad epoch length {other:?}")))
        }
    }
}

fn cmd_storage(a: &StorageArgs, f: &FileConfig, out: Option<&Path>) -> CliResult {
    let s = "storage-compare";
    let deltas = f.pick(a.deltas.clone(), s, "deltas", vec![1.0, 10.0, 60.0, 600.0, 3600.0])?;
    let epochs = f.pick(a.epochs.clone(), s, "epochs", vec!["day".into(), "month".into(), "year".into()])?;
    let revoked = f.pick(a.revoked, s, "revoked", 1.0)?;
    let fanout = f.pick(a.fanout, s, "fanout", 2u32)?;
    let target = f.pick(a.target_fp, s, "target_fp", 0.001)?;
    let demand = FleetDemand::porto_like();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "delta_s",
        "epoch_s",
        "slots",
        "rrp_entries",
        "slot_locked_entries",
        "rrp_kb",
        "slot_locked_kb",
        "ratio",
    ])
    .map_err(usage)?;
    for e in &epochs {
        let epoch_len = parse_epoch(e)?;
        for &delta in &deltas {
            if delta > epoch_len {
                continue;
            }
            let r = sizing::storage_row(delta, epoch_len, &demand, revoked, fanout, target).map_err(usage)?;
            let kb = |b: u64| b as f64 / 1024.0;
            w.write_record([
                format!("{delta}"),
                format!("{epoch_len}"),
                r.slots.to_string(),
                format!("{:.0}", r.rrp_entries),
                format!("{:.0}", r.linear_entries),
                format!("{:.3}", kb(r.rrp_bytes)),
                format!("{:.3}", kb(r.linear_bytes)),
                format!("{:.3}", r.linear_bytes as f64 / r.rrp_bytes.max(1) as f64),
            ])
            .map_err(usage)?;
        }
    }
    let text = String::from_utf8(w.into_inner().map_err(usage)?).map_err(usage)?;
    print!("{text}");
    write_out(out, "storage.csv", &text)
}

fn keygen_seed(seed: u64, name: &str) -> Seed {
    digest_parts(&[b"rrp-keygen", name.as_bytes(), &seed.to_be_bytes()])
}

fn cmd_keygen(a: &KeygenArgs, f: &FileConfig, seed: Option<u64>, out: Option<&Path>) -> CliResult {
    let name = f.pick(a.name.clone(), "keygen", "name", "pm".to_string())?;
    let s = keygen_seed(seed.unwrap_or(1), &name);
    let key = det_key_gen(&s);
    println!("seed {}", hex::encode(s.0));
    println!("public {}", key.public().to_hex());
    write_out(out, &format!("{name}.seed"), &format!("{}\n", hex::encode(s.0)))?;
    write_out(out, &format!("{name}.pub"), &format!("{}\n", key.public().to_hex()))
}

fn pm_key(hex_seed: Option<&str>, seed: Option<u64>) -> Result<KeyPair, CliError> {
    let s = match hex_seed {
        Some(h) => {
            let bytes: [u8; 32] = hex::decode(h.trim())
                .map_err(usage)?
                .try_into()
                .map_err(|_| usage("--pm-seed must be 32 bytes of hex"))?;
            Seed(bytes)
        }
        None => keygen_seed(seed.unwrap_or(1), "pm"),
    };
    Ok(det_key_gen(&s))
}

fn cmd_pseudonym(a: &PseudonymArgs, f: &FileConfig, seed: Option<u64>) -> CliResult {
    let p = "pseudonym";
    let pm_seed: Option<String> = f.pick_opt(a.pm_seed.clone(), p, "pm_seed")?;
    let key = pm_key(pm_seed.as_deref(), seed)?;
    let epoch = f.pick(a.epoch, p, "epoch", 0u64)?;
    let instance = f.pick(a.instance, p, "instance", 1u32)?;
    let pseudonyms = f.pick(a.pseudonyms, p, "pseudonyms", 10u32)?;
    let cfg = EpochConfig::new(
        epoch,
        f.pick(a.epoch_len, p, "epoch_len", 86_400u64)?,
        f.pick(a.delta, p, "delta", 600u64)?,
        f.pick(a.fanout, p, "fanout", 2u32)?,
    )
    .map_err(usage)?;
    let slot = f.pick(a.slot, p, "slot", 0u64)?;
    let cid = ClientId(digest(a.client.as_bytes()).0);
    let rrp = create_rrp(cid, epoch, instance, &key, pseudonyms).map_err(usage)?;
    let cap = get_capability(&rrp, slot, &cfg).map_err(usage)?;
    let ok = verify_capability(&cap, &key.public(), slot, &cfg);
    let labels: Vec<String> = cap.latchkeys.iter().map(|l| l.label.notation(cfg.fanout())).collect();
    println!("pm_public {}", key.public().to_hex());
    println!("pseudonym {}", rrp.public().to_hex());
    println!("epoch {epoch} instance {instance} slot {slot} of {}", cfg.slots());
    println!("labels {}", labels.join(" "));
    println!("capability {}", hex::encode(codec::encode_capability(&cap).map_err(usage)?));
    println!("verified {ok}");
    if ok {
        Ok(())
    } else {
        Err(CliError::Failed("capability failed verification".into()))
    }
}
