//! Free transport of Gaussian data: conserved weights, the `L^1` norm, the
//! decay of the density at the origin and the Klainerman-Sobolev ratio.

use std::time::Instant;

use anyhow::Result;
use nalgebra::Vector3;
use vmnull::diagnostics::{decay_slope, ks_ratio, ks_rhs, DecaySeries};
use vmnull::dynamics::{free_transport, sample_initial, GaussianData};
use vmnull::operators::weights;

use crate::config::RunConfig;
use crate::report::{Origin, Recorder, Threshold};
use crate::{Outcome, Table, Timings};

pub const WEIGHT_TOL: f64 = 1e-10;
/// Linear decay `t^-3` of velocity averages, widened by 0.3.
pub const SLOPE_WINDOW: (f64, f64) = (-3.3, -2.7);
pub const KS_STABILITY: f64 = 0.10;
pub const KS_CALIBRATION: [f64; 3] = [1.0, 2.0, 4.0];
pub const KS_VALIDATION: [f64; 2] = [8.0, 16.0];
/// Radii of the sample set in units of `max(t, 1)`.
const KS_RADII: [f64; 8] = [0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0];

fn ks_directions() -> [Vector3<f64>; 3] {
    [Vector3::x(), Vector3::new(0.3, -0.5, 0.8).normalize(), Vector3::new(-0.6, 0.7, 0.2).normalize()]
}

fn transport(rec: &mut Recorder, cfg: &RunConfig, f0: &GaussianData) -> Result<()> {
    let g = &cfg.grid;
    let mut e = sample_initial(f0, cfg.ensemble.n, cfg.ensemble.seed, vec![])?;
    let l1 = e.l1_norm();
    let steps = g.steps();
    free_transport(&mut e, g.dt, steps);
    let (mut worst, mut at) = (0.0f64, String::new());
    for (i, p) in e.particles.iter().enumerate() {
        let (a, b) = (weights(e.t, &p.x, &p.v), weights(0.0, &p.x_init, &p.v));
        let d = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        if d > worst || d.is_nan() {
            worst = d;
            at = format!("particle {i} x0={:?} v={:?}", p.x_init.as_slice(), p.v.as_slice());
        }
    }
    let span = format!("t in [0, {:.2}], dt = {}, {steps} steps", e.t, g.dt);
    rec.check("weights", worst, Threshold::AtMost(WEIGHT_TOL), Origin::Design, if at.is_empty() { span.clone() } else { format!("{at}, {span}") });
    rec.check("l1-norm", e.l1_norm() - l1, Threshold::Equal(0.0), Origin::Design, span);
    rec.report.note("particles", e.len());
    Ok(())
}

fn density_decay(rec: &mut Recorder, cfg: &RunConfig, f0: &GaussianData) -> Result<Table> {
    let [lo, hi] = cfg.run.window;
    let n = cfg.run.samples;
    let mut s = DecaySeries::new();
    for k in 0..n {
        let t = lo * (hi / lo).powf(k as f64 / (n - 1) as f64);
        s.push(t, vmnull::diagnostics::ks_lhs(f0, t, &Vector3::zeros())?);
    }
    let fit = decay_slope(&s)?;
    let at = format!("x = 0, t in [{lo}, {hi}], {n} samples, stderr {:.3e}", fit.stderr);
    rec.check("density-slope", fit.slope, Threshold::Within(SLOPE_WINDOW.0, SLOPE_WINDOW.1), Origin::Rate, at);
    rec.report.note("density_slope", fit.slope);
    rec.report.note("density_slope_stderr", fit.stderr);
    let rows = s.t.iter().zip(&s.q).map(|(t, q)| vec![*t, *t, *q, fit.stderr]).collect();
    Ok(Table { file: "density_x0.csv".into(), header: vec!["t", "u", "value", "stderr"], rows })
}

fn ks_stability(rec: &mut Recorder, cfg: &RunConfig, f0: &GaussianData) -> Result<Table> {
    let rhs = ks_rhs(f0, cfg.run.ks_samples, cfg.ensemble.seed)?;
    rec.report.note("ks_rhs", rhs);
    let dirs = ks_directions();
    // largest ratio over the sample set at t, with the radius attaining it
    let max_at = |t: f64| -> Result<(f64, f64)> {
        let mut best = (f64::NEG_INFINITY, 0.0);
        for d in &dirs {
            for a in KS_RADII {
                let r = a * t.max(1.0);
                let q = ks_ratio(f0, t, &(d * r), rhs)?;
                if q > best.0 {
                    best = (q, r);
                }
            }
        }
        Ok(best)
    };
    let mut rows = Vec::new();
    let (mut cal, mut val) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut prev: Option<f64> = None;
    for t in KS_CALIBRATION.iter().chain(&KS_VALIDATION) {
        let (q, r) = max_at(*t)?;
        if KS_CALIBRATION.contains(t) {
            cal = cal.max(q);
        } else {
            val = val.max(q);
        }
        let change = prev.map_or(0.0, |p| (q - p) / p);
        rows.push(vec![*t, r, q, change]);
        prev = Some(q);
    }
    let rel = (val - cal) / cal;
    let at = format!("calibration max {cal:.6e} on t in {KS_CALIBRATION:?}, validation max {val:.6e} on t in {KS_VALIDATION:?}");
    rec.check("ks-stability", rel.abs(), Threshold::AtMost(KS_STABILITY), Origin::Design, at);
    Ok(Table { file: "ks.csv".into(), header: vec!["t", "r_max", "ratio", "change"], rows })
}

pub fn run(cfg: &RunConfig) -> Result<Outcome> {
    let f0 = cfg.ensemble.data();
    let mut rec = Recorder::new(cfg.experiment.name(), cfg.ensemble.seed, &cfg.tolerances);
    let mut timings = Timings::default();
    let clock = Instant::now();
    transport(&mut rec, cfg, &f0)?;
    timings.push("transport", clock.elapsed());
    let clock = Instant::now();
    let density = density_decay(&mut rec, cfg, &f0)?;
    timings.push("density", clock.elapsed());
    let clock = Instant::now();
    let ks = ks_stability(&mut rec, cfg, &f0)?;
    timings.push("klainerman-sobolev", clock.elapsed());
    Ok(Outcome { report: rec.finish(), timings, tables: vec![density, ks] })
}
