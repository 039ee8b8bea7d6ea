use std::ffi::CString;

use pyo3::prelude::*;
use pyo3::types::{PyDict, PyModule};

fn run(code: &str) {
    Python::attach(|py| {
        let m = PyModule::new(py, "rrp").unwrap();
        rrp_py::rrp(&m).unwrap();
        let globals = PyDict::new(py);
        globals.set_item("rrp", m).unwrap();
        let code = CString::new(code).unwrap();
        if let Err(e) = py.run(&code, Some(&globals), None) {
            e.print(py);
            panic!("python snippet failed");
        }
    });
}

#[test]
fn worked_example_through_python() {
    run(r#"
pm = rrp.keygen("pm", 1)
cfg = rrp.EpochConfig(0, 60, 15)
assert cfg.slots == 4 and cfg.height == 2
rrp_ = rrp.create_rrp(rrp.client_id("alice"), 0, 1, pm)
assert rrp_.endorsed_by(pm.public)
cap = rrp_.get_capability(0, cfg)
assert cap.labels() == ["e00", "e0", "e"], cap.labels()
assert cap.verify(pm.public, 0, cfg)
assert not cap.verify(pm.public, 1, cfg)
assert rrp.Capability.from_bytes(cap.to_bytes()) == cap
assert sorted(cfg.safe_cover(1, 3)) == ["e01", "e1"], cfg.safe_cover(1, 3)
assert cfg.safe_cover(0, 3) == ["e"]
"#);
}

#[test]
fn revocation_and_merge() {
    run(r#"
pm = rrp.keygen()
cfg = rrp.EpochConfig(3, 64, 1)
a = rrp.create_rrp(rrp.client_id("a"), 3, 1, pm)
b = rrp.create_rrp(rrp.client_id("b"), 3, 2, pm)
ea = rrp.ErcSet.create([a.get_capability(s, cfg) for s in range(40, 64)], cfg, 8192, 5)
eb = rrp.ErcSet.create([b.get_capability(s, cfg) for s in range(0, 64)], cfg, 8192, 5)
both = ea.merge(eb)
assert both.ones >= ea.ones
assert both.is_revoked(a.get_capability(50, cfg))
assert not both.is_revoked(a.get_capability(39, cfg))
assert both.is_revoked(b.get_capability(0, cfg))
assert rrp.ErcSet.from_bytes(both.to_bytes()) == both
try:
    rrp.ErcSet.create([a.get_capability(1, cfg), b.get_capability(1, cfg)], cfg)
    raise SystemExit("mixed pseudonyms accepted")
except ValueError:
    pass
try:
    ea.merge(rrp.ErcSet(3, 4096, 5))
    raise SystemExit("incompatible merge accepted")
except ValueError:
    pass
"#);
}

#[test]
fn sizing_and_simulation() {
    run(r#"
plan = rrp.plan_filter(slots=144)
assert abs(plan.n - 4911) <= 1, plan
assert abs(plan.kilobytes - 9) <= 1
assert abs(rrp.plan_filter(slots=1440).kilobytes - 13) <= 1
report = rrp.run_scenario('[sim]\nhorizon = 60\nclients = 2\n[assert]\nsafety = true\nconverged = true\n', seed=3)
assert report.passed and report.converged and not report.safety_violations, report.text
try:
    rrp.run_scenario("[sim]\nnope = 1\n")
    raise SystemExit("bad scenario accepted")
except ValueError:
    pass
"#);
}
