//! Identity suite: pointwise algebraic and differential identities at
//! seeded random points, commutators with a refinement study of their
//! finite-difference versions, and the quadrature lemmas.

use std::time::Instant;

use anyhow::Result;
use nalgebra::{Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vmnull::diagnostics::{foliation_check, integral_bound_check, stability};
use vmnull::fields::PotentialWaves;
use vmnull::geometry::*;
use vmnull::operators::*;

use crate::config::RunConfig;
use crate::report::{Origin, Recorder, Threshold};
use crate::{Outcome, Timings};

/// Switches for negative controls.
#[derive(Debug, Clone, Copy)]
pub struct Hooks {
    /// Orientation used for the Levi-Civita symbol in the dual checks; `-1`
    /// corrupts the convention.
    pub orientation: f64,
}

impl Default for Hooks {
    fn default() -> Self {
        Self { orientation: 1.0 }
    }
}

pub const EXACT_TOL: f64 = 1e-10;
pub const COMMUTATOR_TOL: f64 = 1e-8;
pub const FD_RATIO: (f64, f64) = (3.2, 4.8);
pub const FOLIATION_TOL: f64 = 1e-6;
pub const LEMMA_STABILITY: f64 = 0.15;
pub const LEMMA_TRIPLES: [(f64, f64, f64); 3] = [(2.0, 2.0, 3.0), (3.0, 2.0, 1.0), (2.0, 3.0, 2.0)];

struct Sample {
    y: Phase7,
    f: TwoForm,
    w: Vector3<f64>,
}

fn samples(n: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let t = rng.gen_range(0.05..10.0);
        let x: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-8.0..8.0));
        let v: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-5.0..5.0));
        let e: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-3.0..3.0));
        let b: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-3.0..3.0));
        let w: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-3.0..3.0));
        if Vector3::from(x).norm() < 1e-2 {
            continue;
        }
        out.push(Sample { y: phase_point(t, x, v), f: TwoForm::new(e, b), w: Vector3::from(w) });
    }
    out
}

fn wave(s: f64) -> WaveKernel {
    let k1 = Phase7::from_column_slice(&[0.3, -0.2, 0.5, 0.1, 0.4, -0.3, 0.2]);
    let k2 = Phase7::from_column_slice(&[-0.4, 0.1, 0.2, -0.6, 0.1, 0.5, -0.2]);
    WaveKernel { offset: 0.2, modes: vec![(1.0, k1 * (1.0 + 0.1 * s), 0.3), (0.7, k2, 1.1 + s)] }
}

fn test_field() -> PotentialWaves {
    PotentialWaves {
        modes: vec![
            (Vector4::new(0.5, 0.3, -0.4, 0.2), Vector4::new(0.1, 0.8, 0.3, -0.2), 0.4),
            (Vector4::new(-0.3, 0.2, 0.6, -0.1), Vector4::new(-0.4, 0.1, 0.5, 0.3), 1.3),
        ],
    }
}

/// Largest value seen and where.
struct Worst {
    value: f64,
    at: String,
}

impl Worst {
    fn new() -> Self {
        Self { value: 0.0, at: String::new() }
    }

    fn see(&mut self, v: f64, at: impl FnOnce() -> String) {
        let v = v.abs();
        // NaN always wins so that it is reported
        if v > self.value || v.is_nan() && !self.value.is_nan() {
            self.value = v;
            self.at = at();
        }
    }
}

fn loc(i: usize, y: &Phase7) -> String {
    format!("point {i} y={:?}", y.as_slice())
}

const GOOD: [GoodDerivative; 8] = [
    GoodDerivative::Lbar,
    GoodDerivative::L,
    GoodDerivative::Angular(0),
    GoodDerivative::Angular(1),
    GoodDerivative::Time,
    GoodDerivative::Space(0),
    GoodDerivative::Space(1),
    GoodDerivative::Space(2),
];

fn exact_identities(rec: &mut Recorder, pts: &[Sample], hooks: Hooks) -> Result<()> {
    let g = wave(0.7);
    let names = [
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
    let mut worst: Vec<Worst> = names.iter().map(|_| Worst::new()).collect();
    for (i, s) in pts.iter().enumerate() {
        let (t, x, v) = split(&s.y);
        let at = || loc(i, &s.y);
        let mv = MassShellVelocity { v };
        let scale = 1.0 + s.y.norm();
        worst[0].see(lagrange_residual(&x, &mv)?, at);
        worst[1].see(vlbar_residual(&SpacetimePoint { t, x }, &mv)?, at);
        for w in GOOD {
            worst[2].see(good_derivative_residual(w, &g, &s.y)? / scale, at);
        }
        worst[3].see(vradial_residual(&g, &s.y)? / scale, at);
        let ne = null_expansion_residual(&s.f, &v, &s.w, &x)?;
        worst[4].see(ne / ((1.0 + v.norm()) * (1.0 + s.w.norm()) * (1.0 + s.f.norm_sq().sqrt())), at);
        let fr = spherical_frame(&x)?;
        worst[5].see(energy_components_residual(&s.f, &fr), at);
        worst[6].see(double_dual_residual(&s.f, hooks.orientation), at);
        worst[7].see(dual_components_residual(&s.f, hooks.orientation), at);
        worst[8].see(weight_action_residual(&s.y) / (1.0 + s.y.norm_squared()), at);
    }
    for (name, w) in names.iter().zip(worst) {
        rec.check(name, w.value, Threshold::AtMost(EXACT_TOL), Origin::Design, w.at);
    }
    Ok(())
}

fn forced_identities() -> Vec<Identity> {
    let mut ids: Vec<Identity> = FieldId::ALL.iter().map(|z| Identity::Forced(*z)).collect();
    ids.extend((0..3).map(Identity::ForcedX));
    ids.extend(FieldId::MODIFIABLE.iter().map(|z| Identity::ForcedModified(*z)));
    ids
}

fn family(id: Identity) -> &'static str {
    match id {
        Identity::Free(_) => "free",
        Identity::Forced(_) => "forced",
        Identity::ForcedX(_) => "forced-x",
        Identity::ForcedModified(_) => "forced-modified",
    }
}

fn commutators(rec: &mut Recorder, pts: &[Sample], fd_points: usize, h: f64) -> Result<()> {
    let g = wave(0.4);
    let free = CommutatorInput { field: &ZeroField, phi: None, mode: DerivativeMode::Analytic };
    let mut w = Worst::new();
    for (i, s) in pts.iter().enumerate() {
        for z in FieldId::ALL {
            let r = commutator_residual(Identity::Free(z), &g, &s.y, &free)?;
            w.see(r, || format!("{} {}", z.name(), loc(i, &s.y)));
        }
    }
    rec.check("free-commutators", w.value, Threshold::AtMost(COMMUTATOR_TOL), Origin::Design, w.at);

    let f = test_field();
    let p = [wave(1.0), wave(2.0), wave(3.0)];
    let phi: [&dyn ScalarKernel; 3] = [&p[0], &p[1], &p[2]];
    let input = |mode| CommutatorInput { field: &f, phi: Some(phi), mode };
    let ids = forced_identities();
    let analytic = input(DerivativeMode::Analytic);
    let mut w = Worst::new();
    for (i, s) in pts.iter().enumerate() {
        for id in &ids {
            let r = commutator_residual(*id, &g, &s.y, &analytic)?;
            w.see(r, || format!("{id:?} {}", loc(i, &s.y)));
        }
    }
    rec.check("forced-commutators", w.value, Threshold::AtMost(COMMUTATOR_TOL), Origin::Design, w.at);

    // refinement: summed |residual| per family at h and h/2
    let (coarse, fine) = (input(DerivativeMode::FiniteDifference(h)), input(DerivativeMode::FiniteDifference(0.5 * h)));
    for fam in ["forced", "forced-x", "forced-modified"] {
        let (mut a, mut b) = (0.0, 0.0);
        for s in pts.iter().take(fd_points) {
            for id in ids.iter().filter(|id| family(**id) == fam) {
                a += commutator_residual(*id, &g, &s.y, &coarse)?.abs();
                b += commutator_residual(*id, &g, &s.y, &fine)?.abs();
            }
        }
        let at = format!("h = {h:e} -> {:e}, residual sums {a:e} -> {b:e}", 0.5 * h);
        rec.check(&format!("fd-ratio.{fam}"), a / b, Threshold::Within(FD_RATIO.0, FD_RATIO.1), Origin::Design, at);
    }
    Ok(())
}

fn quadrature(rec: &mut Recorder) -> Result<()> {
    let decaying = |s: f64, y: &Vector3<f64>| (-s - y.norm()).exp();
    let inner = |s: f64, y: &Vector3<f64>| {
        let r = y.norm();
        if s - r > 0.5 {
            (-1.0 / (s - r - 0.5)).exp() * (2.0 - s)
        } else {
            0.0
        }
    };
    let a = foliation_check(&decaying, 2.0, 60.0)?;
    let b = foliation_check(&inner, 2.0, 3.0)?;
    let (v, at) = if a.relative_difference >= b.relative_difference {
        (a.relative_difference, "exp(-t-r), t = 2")
    } else {
        (b.relative_difference, "support inside the cone, t = 2")
    };
    rec.check("foliation", v, Threshold::AtMost(FOLIATION_TOL), Origin::Design, at);
    let cal: Vec<f64> = (0..10).map(|k| 1.0 + k as f64).collect();
    let val: Vec<f64> = (0..10).map(|k| 10.0 + 10.0 * k as f64).collect();
    for (a, b, m) in LEMMA_TRIPLES {
        let ratios = |ts: &[f64]| -> Result<Vec<f64>> { ts.iter().map(|t| Ok(integral_bound_check(a, b, m, *t)?.ratio)).collect() };
        let s = stability(&ratios(&cal)?, &ratios(&val)?)?;
        let at = format!("calibration max {:.6} on t in [1, 10], validation max {:.6} on [10, 100]", s.calibration, s.validation);
        rec.check(&format!("integral-lemma.{a}-{b}-{m}"), s.relative.abs(), Threshold::AtMost(LEMMA_STABILITY), Origin::Design, at);
    }
    Ok(())
}

pub fn run(cfg: &RunConfig) -> Result<Outcome> {
    run_with_hooks(cfg, Hooks::default())
}

pub fn run_with_hooks(cfg: &RunConfig, hooks: Hooks) -> Result<Outcome> {
    let seed = cfg.ensemble.seed;
    let mut rec = Recorder::new(cfg.experiment.name(), seed, &cfg.tolerances);
    let mut times = Timings::default();
    let clock = Instant::now();
    let pts = samples(cfg.run.points, seed);
    exact_identities(&mut rec, &pts, hooks)?;
    times.push("exact-identities", clock.elapsed());
    let clock = Instant::now();
    commutators(&mut rec, &pts, cfg.run.fd_points.min(pts.len()), cfg.run.fd_step)?;
    times.push("commutators", clock.elapsed());
    let clock = Instant::now();
    quadrature(&mut rec)?;
    times.push("quadrature", clock.elapsed());
    rec.report.note("points", pts.len());
    Ok(Outcome { report: rec.finish(), timings: times, tables: vec![] })
}
