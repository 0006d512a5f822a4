//! The pure-charge field: Maxwell equations with its own source, the decay
//! of its Lie derivatives and the growth of `Phi` along exterior
//! characteristics.

use std::time::Instant;

use anyhow::Result;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vmnull::diagnostics::log2_envelope;
use vmnull::dynamics::trace_characteristic;
use vmnull::fields::{divergence_t_residual, maxwell_residual, null_maxwell_residual, PureChargeField};
use vmnull::operators::{FieldId, FieldKernel, LieKernel, ZeroField};

use crate::config::RunConfig;
use crate::report::{Origin, Recorder, Threshold};
use crate::{Outcome, Table, Timings};

pub const RESIDUAL_TOL: f64 = 1e-8;
/// Coarse step of the centred differences in the null-frame residual.
pub const NULL_FD_STEP: f64 = 1e-3;
pub const LIE_STABILITY: f64 = 0.15;
pub const ENVELOPE_STABILITY: f64 = 0.20;
pub const ENVELOPE_DT: f64 = 0.05;
pub const ENVELOPE_STEPS: usize = 8000;
/// End of the calibration part of the envelope window.
pub const ENVELOPE_SPLIT: f64 = 100.0;
/// Exterior starting points `(x, v)` at `t = 0`.
pub const STARTS: [([f64; 3], [f64; 3]); 4] = [
    ([6.0, 0.0, 0.0], [10.0, 0.0, 0.0]),
    ([6.0, 0.0, 0.0], [10.0, 3.0, 0.0]),
    ([0.0, 5.0, 1.0], [2.0, 10.0, 2.0]),
    ([4.0, 4.0, 0.0], [7.0, 7.0, 1.0]),
];
const U_SAMPLES: [f64; 7] = [-1.1, -1.3, -1.5, -1.7, -1.9, -2.5, -4.0];
const SLOPES: [f64; 4] = [0.0, 0.3, 0.6, 0.9];

fn directions() -> [Vector3<f64>; 3] {
    [Vector3::x(), Vector3::new(0.3, -0.5, 0.8).normalize(), Vector3::new(-0.6, 0.7, 0.2).normalize()]
}

/// Random points with `t - r` spread over the Coulomb region, the
/// transition shell `-2 < t - r < -1` and the vacuum inside.
fn points(n: usize, seed: u64) -> Vec<(f64, Vector3<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let t = rng.gen_range(0.0..20.0);
            let u = rng.gen_range(-6.0..-0.5);
            let d = Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0f64));
            let d = d.try_normalize(1e-6).unwrap_or_else(Vector3::x);
            (t, d * (t - u))
        })
        .collect()
}

/// The residual is linear in its difference quotients, so the Richardson
/// combination of steps `h` and `h/2` cancels their `h^2` error.
fn null_residual(f: &PureChargeField, t: f64, x: &Vector3<f64>) -> Result<f64> {
    let a = null_maxwell_residual(f, f, t, x, NULL_FD_STEP)?;
    let b = null_maxwell_residual(f, f, t, x, 0.5 * NULL_FD_STEP)?;
    let r = |p: f64, q: f64| ((4.0 * q - p) / 3.0).abs();
    Ok(r(a.rho, b.rho).max(r(a.sigma, b.sigma)).max(r(a.alpha[0], b.alpha[0])).max(r(a.alpha[1], b.alpha[1])))
}

fn residuals(rec: &mut Recorder, f: &PureChargeField, n: usize, seed: u64) -> Result<()> {
    let mut worst = [(0.0f64, String::new()), (0.0, String::new()), (0.0, String::new())];
    for (t, x) in points(n, seed) {
        let (a, b) = maxwell_residual(f, f, t, &x);
        let vals = [
            a.abs().max().max(b.abs().max()),
            null_residual(f, t, &x)?,
            divergence_t_residual(f, f, t, &x).abs().max(),
        ];
        for (w, v) in worst.iter_mut().zip(vals) {
            if v > w.0 || v.is_nan() {
                *w = (v, format!("t={t} x={:?}", x.as_slice()));
            }
        }
    }
    for (name, (v, at)) in ["maxwell", "null-maxwell", "divergence-t"].iter().zip(worst) {
        rec.check(name, v, Threshold::AtMost(RESIDUAL_TOL), Origin::Design, at);
    }
    Ok(())
}

/// `tau_+^2 sup |L_{Z^gamma} F|` over `|gamma| <= 2` at one point.
fn weighted_lie(f: &PureChargeField, tp: f64, t: f64, x: &Vector3<f64>) -> f64 {
    let norm = |k: &dyn FieldKernel| k.field(t, x).norm_sq().sqrt();
    let mut best = norm(f);
    for z1 in FieldId::ALL {
        best = best.max(norm(&LieKernel { z: z1, inner: *f }));
        for z2 in FieldId::ALL {
            best = best.max(norm(&LieKernel { z: z2, inner: LieKernel { z: z1, inner: *f } }));
        }
    }
    best * tp * tp
}

fn lie_bound(rec: &mut Recorder, cfg: &RunConfig, f: &PureChargeField) -> Table {
    let [lo, hi] = cfg.run.window;
    let n = cfg.run.samples;
    let dirs = directions();
    let mut rows = Vec::new();
    let (mut cal, mut val) = (0.0f64, 0.0f64);
    for m in 0..n {
        let tp = lo * (hi / lo).powf(m as f64 / n as f64);
        let ub = (tp * tp - 1.0).sqrt();
        let mut sup = 0.0f64;
        for u in U_SAMPLES {
            for th in SLOPES {
                // fixed u, or along t = th r
                let (t, r) = if th == 0.0 {
                    (0.5 * (ub + u), 0.5 * (ub - u))
                } else {
                    let r = ub / (1.0 + th);
                    (th * r, r)
                };
                if t < 0.0 || t - r > -1.0 {
                    continue;
                }
                for d in &dirs {
                    sup = sup.max(weighted_lie(f, tp, t, &(d * r)));
                }
            }
        }
        if m < n / 2 {
            cal = cal.max(sup);
        } else {
            val = val.max(sup);
        }
        rows.push(vec![tp, if m < n / 2 { 1.0 } else { 0.0 }, sup]);
    }
    let split = lo * (hi / lo).powf((n / 2) as f64 / n as f64);
    let at = format!("calibration max {cal:.6} on tau+ in [{lo}, {split:.4}), validation max {val:.6} on [{split:.4}, {hi})");
    rec.check("lie-bound", ((val - cal) / cal).abs(), Threshold::AtMost(LIE_STABILITY), Origin::Design, at);
    Table { file: "lie_bound.csv".into(), header: vec!["tau_plus", "calibration", "weighted_sup"], rows }
}

fn phi(rec: &mut Recorder, cfg: &RunConfig, f: &PureChargeField) -> Result<Vec<Table>> {
    // no field, no growth
    let mut zero = 0.0f64;
    for (x, v) in STARTS {
        let tr = trace_characteristic(&ZeroField, &FieldId::ALL, (0.0, x.into(), v.into()), ENVELOPE_DT, 200)?;
        for c in &tr {
            zero = c.phi.iter().fold(zero, |m, p| m.max(p.abs().max()));
        }
    }
    rec.check("phi-zero-field", zero, Threshold::Equal(0.0), Origin::Design, "all generators, 4 characteristics, t in [0, 10]");

    let fields = cfg.phi_fields()?;
    let boosts: Vec<FieldId> = fields.iter().copied().filter(|z| z.boost_axis().is_some()).collect();
    let mut worst = vec![(0.0f64, String::new()); boosts.len()];
    let mut tables = Vec::new();
    for (s, (x, v)) in STARTS.iter().enumerate() {
        let tr = trace_characteristic(f, &boosts, (0.0, (*x).into(), (*v).into()), ENVELOPE_DT, ENVELOPE_STEPS)?;
        for (g, z) in boosts.iter().enumerate() {
            let samples: Vec<(f64, f64, f64)> = tr.iter().map(|c| (c.t, c.t + c.x.norm(), c.phi[g].norm())).collect();
            match log2_envelope(&samples, ENVELOPE_SPLIT) {
                Ok(_) if worst[g].0.is_nan() => {}
                Ok(st) => {
                    if st.relative.abs() > worst[g].0 || worst[g].1.is_empty() {
                        let at = format!("start x={x:?} v={v:?}: C = {:.6} up to t = {ENVELOPE_SPLIT}, {:.6} over the run", st.calibration, st.validation);
                        worst[g] = (st.relative.abs(), at);
                    }
                }
                Err(e) => worst[g] = (f64::NAN, format!("start x={x:?} v={v:?}: {e}")),
            }
            if s == 0 {
                let rows = samples.iter().step_by(40).map(|(t, ub, p)| vec![*t, t - (ub - t), *p, 0.0]).collect();
                tables.push(Table { file: format!("phi_{}.csv", z.name()), header: vec!["t", "u", "value", "stderr"], rows });
            }
        }
    }
    for (z, (v, at)) in boosts.iter().zip(worst) {
        rec.check(&format!("phi-envelope.{}", z.name()), v, Threshold::AtMost(ENVELOPE_STABILITY), Origin::Rate, at);
    }
    Ok(tables)
}

pub fn run(cfg: &RunConfig) -> Result<Outcome> {
    let f = PureChargeField { q: cfg.run.charge };
    let mut rec = Recorder::new(cfg.experiment.name(), cfg.ensemble.seed, &cfg.tolerances);
    let mut timings = Timings::default();
    let clock = Instant::now();
    residuals(&mut rec, &f, cfg.run.points.min(2000), cfg.ensemble.seed)?;
    timings.push("residuals", clock.elapsed());
    let clock = Instant::now();
    let mut tables = vec![lie_bound(&mut rec, cfg, &f)];
    timings.push("lie-bound", clock.elapsed());
    let clock = Instant::now();
    tables.extend(phi(&mut rec, cfg, &f)?);
    timings.push("phi", clock.elapsed());
    Ok(Outcome { report: rec.finish(), timings, tables })
}
