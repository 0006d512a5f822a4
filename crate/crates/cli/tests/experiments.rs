use std::fs;

use vmnull_cli::identities::{run_with_hooks, Hooks};
use vmnull_cli::vm::GrowthMonitor;
use vmnull_cli::{run, Experiment, RunConfig, Status};

fn identities(points: usize, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::defaults(Experiment::Identities);
    cfg.run.points = points;
    cfg.run.fd_points = 50;
    cfg.ensemble.seed = seed;
    cfg
}

/// A coupled run small enough for a unit test: 32 cells on [-8, 8]^3.
fn small_vm(epsilon: f64) -> RunConfig {
    let text = format!(
        "experiment = \"vm-run\"
[grid]
l = 8.0
h = 0.5
dt = 0.25
t_final = 3.0
[ensemble]
n = 20000
epsilon = {epsilon:?}
sigma_x = [0.6, 0.5, 0.4]
[run]
window = [1.0, 3.0]
solver_checks = false
snapshots = false
"
    );
    RunConfig::parse(&text).unwrap()
}

#[test]
fn identity_suite_passes_and_ignores_the_seed() {
    let a = run(&identities(2000, 1), None).unwrap().report;
    let b = run(&identities(2000, 99), None).unwrap().report;
    assert!(a.passed(true), "{}", a.render());
    let verdicts = |r: &vmnull_cli::Report| r.checks.iter().map(|c| (c.name.clone(), c.status)).collect::<Vec<_>>();
    assert_eq!(verdicts(&a), verdicts(&b));
    assert_eq!(a.summary["points"], "2000");
}

#[test]
fn corrupted_orientation_fails_only_the_dual_components() {
    let r = run_with_hooks(&identities(500, 3), Hooks { orientation: -1.0 }).unwrap().report;
    assert_eq!(r.get("dual-components").unwrap().status, Status::Fail);
    assert!(!r.get("dual-components").unwrap().location.is_empty());
    // the double dual is blind to the sign of the symbol
    assert_eq!(r.get("double-dual").unwrap().status, Status::Pass);
    assert_eq!(r.get("lagrange").unwrap().status, Status::Pass);
}

#[test]
fn coupled_runs_replay_bit_for_bit() {
    let cfg = small_vm(0.05);
    let a = run(&cfg, None).unwrap();
    let b = run(&cfg, None).unwrap();
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    a.write(da.path(), false).unwrap();
    b.write(db.path(), false).unwrap();
    for f in ["report.csv", "summary.txt", "energy.csv", "probe_alpha.csv", "probe_rho.csv"] {
        assert_eq!(fs::read(da.path().join(f)).unwrap(), fs::read(db.path().join(f)).unwrap(), "{f}");
    }
    let r = &a.report;
    for name in ["charge", "gauss-law", "max-field", "maxwell-energy", "vlasov-energy"] {
        assert_eq!(r.get(name).unwrap().status, Status::Pass, "{}", r.render());
    }
}

#[test]
fn zero_data_is_a_vacuum_run() {
    let mut cfg = small_vm(0.0);
    cfg.run.solver_checks = true;
    let out = run(&cfg, None).unwrap();
    let r = &out.report;
    assert!(r.passed(false), "{}", r.render());
    assert_eq!(r.get("vacuum-field").unwrap().value, 0.0);
    assert_eq!(r.get("slope.alpha").unwrap().status, Status::Skip);
    assert!(!r.passed(true));
    for name in ["plane-wave-ratio", "div-b", "energy-drift"] {
        assert_eq!(r.get(name).unwrap().status, Status::Pass);
    }
    let energy = out.tables.iter().find(|t| t.file == "energy.csv").unwrap();
    assert!(energy.rows.iter().all(|row| row[1] == 0.0));
}

#[test]
fn snapshots_are_written_when_asked() {
    let mut cfg = small_vm(0.05);
    cfg.run.snapshots = true;
    let dir = tempfile::tempdir().unwrap();
    run(&cfg, Some(dir.path())).unwrap();
    let grid = vmnull::fields::yee::YeeGrid::read_snapshot(&mut fs::File::open(dir.path().join("snapshots/fields.bin")).unwrap()).unwrap();
    assert!((grid.t - 3.0).abs() < 1e-12);
    let ens = vmnull::dynamics::Ensemble::read_snapshot(&mut fs::File::open(dir.path().join("snapshots/ensemble.bin")).unwrap()).unwrap();
    assert_eq!(ens.len(), 20000);
}

#[test]
fn instability_detector() {
    let mut m = GrowthMonitor::new(100.0, 0.0);
    // the first nonzero energy becomes the reference
    m.observe(0.1, 0.0).unwrap();
    m.observe(0.2, 2.0).unwrap();
    m.observe(0.3, 199.0).unwrap();
    let err = m.observe(0.4, 201.0).unwrap_err();
    assert!(err.to_string().contains("instability") && err.to_string().contains("t = 0.4"), "{err}");
    assert!(GrowthMonitor::new(100.0, 1.0).observe(0.0, f64::NAN).is_err());
}

#[test]
fn free_decay_at_reduced_size() {
    let text = "experiment = \"free-decay\"\n[ensemble]\nn = 20000\n[grid]\nt_final = 10.0\n[run]\nks_samples = 500\n";
    let r = run(&RunConfig::parse(text).unwrap(), None).unwrap().report;
    for name in ["weights", "l1-norm", "density-slope"] {
        assert_eq!(r.get(name).unwrap().status, Status::Pass, "{}", r.render());
    }
    assert!(r.get("ks-stability").is_some());
}

#[test]
fn pure_charge_defaults_pass() {
    let out = run(&RunConfig::defaults(Experiment::PureCharge), None).unwrap();
    assert!(out.report.passed(true), "{}", out.report.render());
    assert!(out.tables.iter().any(|t| t.file == "lie_bound.csv"));
}

#[test]
fn zero_charge_has_no_envelope() {
    let mut cfg = RunConfig::defaults(Experiment::PureCharge);
    cfg.run.charge = 0.0;
    let r = run(&cfg, None).unwrap().report;
    assert_eq!(r.get("maxwell").unwrap().status, Status::Pass);
    let e = r.get("phi-envelope.boost1").unwrap();
    assert_eq!(e.status, Status::Fail);
    assert!(e.location.contains("calibration"), "{}", e.location);
}
