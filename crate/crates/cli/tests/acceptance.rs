//! Acceptance suite: runs every experiment at full size with its default
//! configuration and prints one line per criterion. Thresholds and runtime
//! limits are pinned here, so a looser default in the library fails the
//! suite instead of passing silently.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use vmnull_cli::{run, Experiment, Outcome, RunConfig, Status, Threshold};

use Threshold::{AtMost, Equal, Within};

struct Criterion {
    title: &'static str,
    checks: Vec<(&'static str, Threshold)>,
    /// Further conditions: description and verdict.
    extra: Vec<(String, bool)>,
}

fn secs(d: Option<Duration>) -> f64 {
    d.map_or(f64::INFINITY, |d| d.as_secs_f64())
}

fn runtime(label: &str, d: f64, limit: f64) -> (String, bool) {
    (format!("{label} {d:.1} s < {limit} s"), d < limit)
}

fn evaluate(c: &Criterion, out: &Outcome) -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, pinned) in &c.checks {
        match out.report.get(name) {
            Some(k) => {
                let good = k.status == Status::Pass && k.threshold == *pinned;
                ok &= good;
                let flag = if good { "" } else { " (!)" };
                parts.push(format!("{name} {:.3e} {}{flag}", k.value, pinned));
            }
            None => {
                ok = false;
                parts.push(format!("{name} missing"));
            }
        }
    }
    for (what, good) in &c.extra {
        ok &= *good;
        parts.push(if *good { what.clone() } else { format!("{what} (!)") });
    }
    (ok, parts.join("; "))
}

fn timed(cfg: &RunConfig) -> (Outcome, f64) {
    let clock = Instant::now();
    let out = run(cfg, None).unwrap_or_else(|e| panic!("{} failed to run: {e:#}", cfg.experiment));
    (out, clock.elapsed().as_secs_f64())
}

fn main() -> ExitCode {
    let ids_cfg = RunConfig::defaults(Experiment::Identities);
    let free_cfg = RunConfig::defaults(Experiment::FreeDecay);
    let pc_cfg = RunConfig::defaults(Experiment::PureCharge);
    let vm_cfg = RunConfig::defaults(Experiment::VmRun);

    let (ids, _) = timed(&ids_cfg);
    let (free, free_time) = timed(&free_cfg);
    let (pc, _) = timed(&pc_cfg);
    let (vm, vm_time) = timed(&vm_cfg);

    let points: usize = ids.report.summary.get("points").and_then(|p| p.parse().ok()).unwrap_or(0);
    let exact = [
        "lagrange",
        "vlbar",
        "good-derivatives",
        "vradial",
        "null-expansion",
        "energy-components",
        "double-dual",
        "dual-components",
        "weight-action",
    ];
    let fg = &free_cfg.grid;
    let vg = &vm_cfg.grid;
    let criteria: Vec<(Criterion, &Outcome)> = vec![
        (
            Criterion {
                title: "exact identities",
                checks: exact.iter().map(|n| (*n, AtMost(1e-10))).collect(),
                extra: vec![
                    (format!("{points} points >= 10000"), points >= 10_000),
                    runtime("identities", secs(ids.timings.get("exact-identities")), 10.0),
                ],
            },
            &ids,
        ),
        (
            Criterion {
                title: "commutators",
                checks: vec![
                    ("free-commutators", AtMost(1e-8)),
                    ("forced-commutators", AtMost(1e-8)),
                    ("fd-ratio.forced", Within(3.2, 4.8)),
                    ("fd-ratio.forced-x", Within(3.2, 4.8)),
                    ("fd-ratio.forced-modified", Within(3.2, 4.8)),
                ],
                extra: vec![runtime("commutators", secs(ids.timings.get("commutators")), 30.0)],
            },
            &ids,
        ),
        (
            Criterion {
                title: "pure-charge field",
                checks: vec![
                    ("maxwell", AtMost(1e-8)),
                    ("null-maxwell", AtMost(1e-8)),
                    ("divergence-t", AtMost(1e-8)),
                    ("lie-bound", AtMost(0.15)),
                ],
                extra: vec![],
            },
            &pc,
        ),
        (
            Criterion {
                title: "free transport",
                checks: vec![
                    ("weights", AtMost(1e-10)),
                    ("l1-norm", Equal(0.0)),
                    ("density-slope", Within(-3.3, -2.7)),
                    ("ks-stability", AtMost(0.10)),
                ],
                extra: vec![
                    (
                        format!("N = {}, dt = {}, t = {}, window {:?}", free_cfg.ensemble.n, fg.dt, fg.t_final, free_cfg.run.window),
                        free_cfg.ensemble.n == 1_000_000 && fg.dt == 0.01 && fg.t_final == 50.0 && free_cfg.run.window == [5.0, 40.0],
                    ),
                    runtime("free-decay", free_time, 120.0),
                ],
            },
            &free,
        ),
        (
            Criterion {
                title: "Maxwell solver",
                checks: vec![("plane-wave-ratio", Within(3.0, 5.0)), ("div-b", AtMost(1e-12)), ("energy-drift", AtMost(1e-2))],
                extra: vec![],
            },
            &vm,
        ),
        (
            Criterion {
                title: "coupled small-data run",
                checks: vec![
                    ("charge", AtMost(1e-12)),
                    ("max-field", AtMost(0.1)),
                    ("maxwell-energy", AtMost(1e-6)),
                    ("vlasov-energy", AtMost(1e-6)),
                    ("slope.alpha", Within(-2.5, -1.5)),
                    ("slope.rho", Within(-2.5, -1.5)),
                ],
                extra: vec![
                    (
                        format!("N = {}, {} cells", vm_cfg.ensemble.n, vg.cells().unwrap_or(0)),
                        vm_cfg.ensemble.n == 1_000_000 && vg.cells().ok() == Some(48),
                    ),
                    runtime("vm-run", vm_time, 900.0),
                ],
            },
            &vm,
        ),
        (
            Criterion {
                title: "Phi coefficients",
                checks: vec![
                    ("phi-zero-field", Equal(0.0)),
                    ("phi-envelope.boost1", AtMost(0.20)),
                    ("phi-envelope.boost2", AtMost(0.20)),
                    ("phi-envelope.boost3", AtMost(0.20)),
                ],
                extra: vec![],
            },
            &pc,
        ),
        (
            Criterion {
                title: "quadrature lemmas",
                checks: vec![
                    ("foliation", AtMost(1e-6)),
                    ("integral-lemma.2-2-3", AtMost(0.15)),
                    ("integral-lemma.3-2-1", AtMost(0.15)),
                    ("integral-lemma.2-3-2", AtMost(0.15)),
                ],
                extra: vec![],
            },
            &ids,
        ),
    ];

    let mut all = true;
    for (i, (c, out)) in criteria.iter().enumerate() {
        let (ok, detail) = evaluate(c, out);
        all &= ok;
        println!("criterion {}: {} {}: {detail}", i + 1, if ok { "PASS" } else { "FAIL" }, c.title);
    }
    if all {
        println!("acceptance: all 8 criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: FAILED");
        ExitCode::FAILURE
    }
}
