//! Python module `rrp`: key generation, pseudonyms and capabilities,
//! revocation filters, filter sizing and the protocol simulator.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use rrp_core::codec;
use rrp_core::crypto::{self, det_key_gen, digest, PublicKey, Seed};
use rrp_core::ercset::{self, FilterParams};
use rrp_core::pseudonym::{self, ClientId};
use rrp_core::simnet::{self, scenario::SimConfig};
use rrp_core::sizing::{self, DeploymentParams};
use rrp_core::slot_tree::{self, SlotRange};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn seed_from(bytes: &[u8]) -> PyResult<Seed> {
    let arr: [u8; 32] = bytes.try_into().map_err(|_| value_err("seed must be 32 bytes"))?;
    Ok(Seed(arr))
}

fn public_from(bytes: &[u8]) -> PyResult<PublicKey> {
    let arr: [u8; 32] = bytes.try_into().map_err(|_| value_err("public key must be 32 bytes"))?;
    Ok(PublicKey(arr))
}

/// Ed25519 signing key derived deterministically from a 32-byte seed.
#[pyclass(frozen, module = "rrp")]
pub struct KeyPair {
    inner: crypto::KeyPair,
    seed: Seed,
}

#[pymethods]
impl KeyPair {
    #[new]
    fn new(seed: &[u8]) -> PyResult<Self> {
        let seed = seed_from(seed)?;
        Ok(KeyPair { inner: det_key_gen(&seed), seed })
    }

    #[getter]
    fn public<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, self.inner.public().as_bytes())
    }

    #[getter]
    fn seed<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, self.seed.as_bytes())
    }

    fn sign<'py>(&self, py: Python<'py>, message: &[u8]) -> Bound<'py, PyBytes> {
        PyBytes::new(py, self.inner.sign(message).as_bytes())
    }

    fn __repr__(&self) -> String {
        format!("KeyPair(public={})", self.inner.public().to_hex())
    }
}

/// Same derivation as `rrp keygen --name NAME --seed SEED`.
#[pyfunction]
#[pyo3(signature = (name = "pm", seed = 1))]
fn keygen(name: &str, seed: u64) -> KeyPair {
    let s = crypto::digest_parts(&[b"rrp-keygen", name.as_bytes(), &seed.to_be_bytes()]);
    KeyPair { inner: det_key_gen(&s), seed: s }
}

/// SHA-256 of the client name, as used by the CLI.
#[pyfunction]
fn client_id<'py>(py: Python<'py>, name: &str) -> Bound<'py, PyBytes> {
    PyBytes::new(py, &digest(name.as_bytes()).0)
}

/// Epoch split into `epoch_len / delta` slots under a `fanout`-ary tree.
#[pyclass(frozen, module = "rrp")]
pub struct EpochConfig {
    inner: slot_tree::EpochConfig,
}

#[pymethods]
impl EpochConfig {
    #[new]
    #[pyo3(signature = (epoch_id, epoch_len, delta, fanout = 2))]
    fn new(epoch_id: u64, epoch_len: u64, delta: u64, fanout: u32) -> PyResult<Self> {
        Ok(EpochConfig { inner: slot_tree::EpochConfig::new(epoch_id, epoch_len, delta, fanout).map_err(value_err)? })
    }

    #[getter]
    fn epoch_id(&self) -> u64 {
        self.inner.epoch_id()
    }

    #[getter]
    fn slots(&self) -> u64 {
        self.inner.slots()
    }

    #[getter]
    fn height(&self) -> u8 {
        self.inner.height()
    }

    /// Labels of the minimal node set revoking slots `first..=last`.
    fn safe_cover(&self, first: u64, last: u64) -> PyResult<Vec<String>> {
        let range = SlotRange::new(&self.inner, first, last).map_err(value_err)?;
        let cover = slot_tree::safe_cover(&self.inner, &range).map_err(value_err)?;
        Ok(cover.iter().map(|l| l.notation(self.inner.fanout())).collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "EpochConfig(epoch_id={}, slots={}, delta={}, fanout={})",
            self.inner.epoch_id(),
            self.inner.slots(),
            self.inner.delta(),
            self.inner.fanout()
        )
    }
}

/// An endorsed pseudonym; holds its private key.
#[pyclass(frozen, module = "rrp")]
pub struct Rrp {
    inner: pseudonym::Rrp,
}

#[pymethods]
impl Rrp {
    #[getter]
    fn public<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, self.inner.public().as_bytes())
    }

    #[getter]
    fn epoch_id(&self) -> u64 {
        self.inner.epoch_id
    }

    #[getter]
    fn instance(&self) -> u32 {
        self.inner.instance
    }

    fn endorsed_by(&self, pm_public: &[u8]) -> PyResult<bool> {
        Ok(self.inner.endorsed_by(&public_from(pm_public)?))
    }

    fn get_capability(&self, slot: u64, cfg: PyRef<'_, EpochConfig>) -> PyResult<Capability> {
        let cap = pseudonym::get_capability(&self.inner, slot, &cfg.inner).map_err(value_err)?;
        Ok(Capability { inner: cap })
    }
}

#[pyfunction]
#[pyo3(signature = (client, epoch_id, instance, pm_key, max_instances = 10))]
fn create_rrp(
    client: &[u8],
    epoch_id: u64,
    instance: u32,
    pm_key: PyRef<'_, KeyPair>,
    max_instances: u32,
) -> PyResult<Rrp> {
    let cid: [u8; 32] = client.try_into().map_err(|_| value_err("client id must be 32 bytes"))?;
    let rrp =
        pseudonym::create_rrp(ClientId(cid), epoch_id, instance, &pm_key.inner, max_instances).map_err(value_err)?;
    Ok(Rrp { inner: rrp })
}

/// Slot-bound token presented to a verifier.
#[pyclass(frozen, module = "rrp")]
pub struct Capability {
    inner: pseudonym::Capability,
}

#[pymethods]
impl Capability {
    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        Ok(Capability { inner: codec::decode_capability(data).map_err(value_err)? })
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyBytes>> {
        Ok(PyBytes::new(py, &codec::encode_capability(&self.inner).map_err(value_err)?))
    }

    #[getter]
    fn slot(&self) -> Option<u64> {
        self.inner.slot()
    }

    #[getter]
    fn pseudonym<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, self.inner.pseudonym_pub.as_bytes())
    }

    /// Node labels of the latchkey chain, leaf first.
    #[pyo3(signature = (fanout = 2))]
    fn labels(&self, fanout: u32) -> Vec<String> {
        self.inner.latchkeys.iter().map(|l| l.label.notation(fanout)).collect()
    }

    fn verify(&self, pm_public: &[u8], slot: u64, cfg: PyRef<'_, EpochConfig>) -> PyResult<bool> {
        Ok(pseudonym::verify_capability(&self.inner, &public_from(pm_public)?, slot, &cfg.inner))
    }

    fn __eq__(&self, other: PyRef<'_, Capability>) -> bool {
        self.inner == other.inner
    }
}

/// Bloom-filter encoding of revoked latchkeys for one epoch.
#[pyclass(frozen, module = "rrp")]
pub struct ErcSet {
    inner: ercset::ErcSet,
}

#[pymethods]
impl ErcSet {
    /// Empty filter of `m` bits and `k` hash functions.
    #[new]
    #[pyo3(signature = (epoch_id, m = 70608, k = 10))]
    fn new(epoch_id: u64, m: u64, k: u8) -> PyResult<Self> {
        let params = FilterParams::new(m, k).map_err(value_err)?;
        Ok(ErcSet { inner: ercset::ErcSet::empty(params, epoch_id) })
    }

    /// Revokes the slots covered by `caps`, which must all come from one pseudonym.
    #[staticmethod]
    #[pyo3(signature = (caps, cfg, m = 70608, k = 10))]
    fn create(caps: Vec<PyRef<'_, Capability>>, cfg: PyRef<'_, EpochConfig>, m: u64, k: u8) -> PyResult<Self> {
        let params = FilterParams::new(m, k).map_err(value_err)?;
        let inner = ercset::create_erc_set(caps.iter().map(|c| &c.inner), &cfg.inner, params).map_err(value_err)?;
        Ok(ErcSet { inner })
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        Ok(ErcSet { inner: codec::decode_erc_set(data).map_err(value_err)? })
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &codec::encode_erc_set(&self.inner))
    }

    fn merge(&self, other: PyRef<'_, ErcSet>) -> PyResult<ErcSet> {
        Ok(ErcSet { inner: ercset::merge_erc_set(&self.inner, &other.inner).map_err(value_err)? })
    }

    fn is_revoked(&self, cap: PyRef<'_, Capability>) -> bool {
        ercset::is_revoked_erc(&self.inner, &cap.inner)
    }

    #[getter]
    fn epoch_id(&self) -> u64 {
        self.inner.epoch_id()
    }

    #[getter]
    fn ones(&self) -> u64 {
        self.inner.filter.count_ones()
    }

    fn __eq__(&self, other: PyRef<'_, ErcSet>) -> bool {
        self.inner == other.inner
    }
}

#[pyclass(frozen, get_all, module = "rrp")]
pub struct FilterPlan {
    n: f64,
    m: u64,
    k: u32,
    height: u32,
    kilobytes: f64,
    p_fp_latchkey: f64,
    p_fp_capability: f64,
    p_full_access: f64,
}

#[pymethods]
impl FilterPlan {
    fn __repr__(&self) -> String {
        format!("FilterPlan(n={:.1}, m={}, k={}, kilobytes={:.2})", self.n, self.m, self.k, self.kilobytes)
    }
}

/// Filter size for a deployment; unset arguments take the fleet defaults.
#[pyfunction]
#[pyo3(signature = (clients = None, pseudonyms = None, revoked_frac = None, slots = None, epoch_len = None, fanout = None, needed = None, extra = None, target_fp = 0.001))]
#[allow(clippy::too_many_arguments)]
fn plan_filter(
    clients: Option<f64>,
    pseudonyms: Option<f64>,
    revoked_frac: Option<f64>,
    slots: Option<u64>,
    epoch_len: Option<f64>,
    fanout: Option<u32>,
    needed: Option<u32>,
    extra: Option<u32>,
    target_fp: f64,
) -> PyResult<FilterPlan> {
    let mut p = DeploymentParams::us_fleet();
    p.clients = clients.unwrap_or(p.clients);
    p.pseudonyms = pseudonyms.unwrap_or(p.pseudonyms);
    p.revoked_frac = revoked_frac.unwrap_or(p.revoked_frac);
    p.epoch_len = epoch_len.unwrap_or(p.epoch_len);
    p.fanout = fanout.unwrap_or(p.fanout);
    p.needed = needed.unwrap_or(p.needed);
    p.extra = extra.unwrap_or(p.extra);
    if let Some(t) = slots {
        if t == 0 {
            return Err(value_err("slots must be positive"));
        }
        p.delta = p.epoch_len / t as f64;
    }
    let r = sizing::plan_filter(&p, target_fp).map_err(value_err)?;
    Ok(FilterPlan {
        n: r.n,
        m: r.m,
        k: r.k,
        height: r.h,
        kilobytes: r.kilobytes(),
        p_fp_latchkey: r.x,
        p_fp_capability: r.p_fp_cap,
        p_full_access: r.p_full_access,
    })
}

#[pyclass(frozen, get_all, module = "rrp")]
pub struct SimReport {
    passed: bool,
    text: String,
    events: u64,
    converged: bool,
    safety_violations: Vec<String>,
    granted_fraction: f64,
}

#[pymethods]
impl SimReport {
    fn __repr__(&self) -> String {
        format!("SimReport(passed={}, events={}, converged={})", self.passed, self.events, self.converged)
    }
}

/// Runs a TOML scenario (the `.scn` format read by `rrp simulate`).
#[pyfunction]
#[pyo3(signature = (scenario, seed = None))]
fn run_scenario(py: Python<'_>, scenario: &str, seed: Option<u64>) -> PyResult<SimReport> {
    let mut cfg = SimConfig::from_toml(scenario).map_err(value_err)?;
    if let Some(s) = seed {
        cfg.sim.seed = s;
    }
    let report = py.detach(|| simnet::run_scenario(&cfg)).map_err(value_err)?;
    Ok(SimReport {
        passed: report.passed(),
        text: report.to_text(),
        events: report.events,
        converged: report.converged,
        safety_violations: report.safety_violations.clone(),
        granted_fraction: report.granted_fraction(),
    })
}

#[pymodule]
pub fn rrp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<KeyPair>()?;
    m.add_class::<EpochConfig>()?;
    m.add_class::<Rrp>()?;
    m.add_class::<Capability>()?;
    m.add_class::<ErcSet>()?;
    m.add_class::<FilterPlan>()?;
    m.add_class::<SimReport>()?;
    m.add_function(wrap_pyfunction!(keygen, m)?)?;
    m.add_function(wrap_pyfunction!(client_id, m)?)?;
    m.add_function(wrap_pyfunction!(create_rrp, m)?)?;
    m.add_function(wrap_pyfunction!(plan_filter, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    Ok(())
}
