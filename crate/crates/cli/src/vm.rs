//! The coupled particle-in-cell run, preceded by vacuum checks of the field
//! solver.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Result};
use nalgebra::Vector3;
use vmnull::diagnostics::{
    decay_slope, energy_inequality_check, probe, vlasov_energy, vlasov_energy_margin, DecaySeries, EnergyRecord, MaxwellEnergyTracker,
};
use vmnull::dynamics::{coupled_step, deposit_charge, sample_initial, CoupledState};
use vmnull::fields::yee::{CurrentGrid, Lattice, YeeGrid};
use vmnull::fields::{PlaneWave, SphericalPulse};
use vmnull::operators::FieldKernel;

use crate::config::RunConfig;
use crate::report::{Origin, Recorder, Threshold};
use crate::{Outcome, Table, Timings};

/// Second order: `4 +- 25%` under halving of the cell size.
pub const PLANE_WAVE_RATIO: (f64, f64) = (3.0, 5.0);
pub const DIV_B_TOL: f64 = 1e-12;
pub const DRIFT_TOL: f64 = 1e-2;
pub const VACUUM_STEPS: usize = 1000;
pub const CHARGE_TOL: f64 = 1e-12;
pub const GAUSS_TOL: f64 = 1e-10;
pub const MAX_FIELD: f64 = 0.1;
/// Allowance for the cone quadrature in the energy inequalities.
pub const ENERGY_TOL: f64 = 1e-6;
/// Rate `-2` of the null components, widened for the logarithms.
pub const SLOPE_WINDOW: (f64, f64) = (-2.5, -1.5);
/// Stopping tolerance of the initial Poisson solve.
pub const POISSON_TOL: f64 = 1e-13;

fn plane_wave_error(n: usize, steps_per_unit: usize, t_end: f64) -> Result<f64> {
    let wave = PlaneWave {
        amplitude: 1.0,
        direction: Vector3::new(1.0, 1.0, 0.0).normalize(),
        polarization: Vector3::z(),
        wavenumber: 1.0,
        phase: 0.2,
    };
    let lat = Lattice::new(n, 4.0)?;
    let mut g = YeeGrid::from_kernel(lat, &wave, 0.0);
    let steps = (t_end * steps_per_unit as f64).round() as usize;
    let dt = t_end / steps as f64;
    let j = CurrentGrid::zeros(lat);
    let bc = |t: f64, x: &Vector3<f64>| wave.field(t, x).e;
    for _ in 0..steps {
        g.step_driven(&j, dt, Some(&bc))?;
    }
    let exact = YeeGrid::from_kernel(lat, &wave, g.t);
    let mut err = 0.0;
    for c in 0..3 {
        for (a, b) in g.e[c].iter().zip(&exact.e[c]).chain(g.b[c].iter().zip(&exact.b[c])) {
            err += (a - b).powi(2);
        }
    }
    Ok((err * lat.h.powi(3)).sqrt())
}

fn solver_checks(rec: &mut Recorder) -> Result<()> {
    let (coarse, fine) = (plane_wave_error(16, 8, 2.0)?, plane_wave_error(32, 16, 2.0)?);
    let at = format!("L2 error {coarse:.4e} at 16 cells, {fine:.4e} at 32, t = 2");
    rec.check("plane-wave-ratio", coarse / fine, Threshold::Within(PLANE_WAVE_RATIO.0, PLANE_WAVE_RATIO.1), Origin::Design, at);

    // off-centre so that no node sits at the centre of symmetry
    let pulse = SphericalPulse { amplitude: 1.0, center: Vector3::new(0.013, -0.021, 0.017), shell: 2.0, width: 1.5 };
    let lat = Lattice::new(32, 5.0)?;
    let mut g = YeeGrid::from_potential(lat, &|t, x| pulse.potential(t, x), 0.0);
    let dt = 0.25 * g.cfl_limit();
    let e0 = g.energy();
    let (mut div, mut drift) = (g.max_div_b(), 0.0f64);
    for _ in 0..VACUUM_STEPS {
        g.step_vacuum(dt)?;
        div = div.max(g.max_div_b());
        drift = drift.max(((g.energy() - e0) / e0).abs());
    }
    let at = format!("spherical pulse, 32 cells, dt = {dt:.4}, {VACUUM_STEPS} steps to t = {:.2}", g.t);
    rec.check("div-b", div, Threshold::AtMost(DIV_B_TOL), Origin::Design, at.clone());
    rec.check("energy-drift", drift, Threshold::AtMost(DRIFT_TOL), Origin::Design, at);
    Ok(())
}

/// Instability detector: the field energy may not exceed `factor` times its
/// reference, which is the first nonzero value observed.
#[derive(Debug, Clone, Copy)]
pub struct GrowthMonitor {
    pub factor: f64,
    pub reference: f64,
}

impl GrowthMonitor {
    pub fn new(factor: f64, initial: f64) -> Self {
        Self { factor, reference: initial }
    }

    pub fn observe(&mut self, t: f64, energy: f64) -> Result<()> {
        if !energy.is_finite() {
            bail!("instability: field energy is {energy} at t = {t}");
        }
        if self.reference == 0.0 {
            self.reference = energy;
        } else if energy > self.factor * self.reference {
            bail!("instability: field energy {energy:e} at t = {t} exceeds {} times its reference {:e}", self.factor, self.reference);
        }
        Ok(())
    }
}

struct Probe {
    name: String,
    u: f64,
    series: DecaySeries,
}

fn grid_charge(rho: &[f64], lat: &Lattice) -> f64 {
    rho.iter().sum::<f64>() * lat.h.powi(3)
}

fn coupled(rec: &mut Recorder, cfg: &RunConfig, out: Option<&Path>, timings: &mut Timings) -> Result<Vec<Table>> {
    let g = &cfg.grid;
    let lat = g.lattice()?;
    let f0 = cfg.ensemble.data();
    let clock = Instant::now();
    let ens = sample_initial(&f0, cfg.ensemble.n, cfg.ensemble.seed, cfg.phi_fields()?)?;
    let mut grid = YeeGrid::zeros(lat, 0.0);
    let rho0 = deposit_charge(&ens, &lat)?;
    let q0 = grid_charge(&rho0, &lat);
    let vacuum = cfg.ensemble.epsilon == 0.0;
    if !vacuum {
        let iters = grid.set_electrostatic(&rho0, POISSON_TOL)?;
        rec.report.note("poisson_iterations", iters);
    }
    let rho_scale = rho0.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let mut s = CoupledState::new(grid, ens)?;
    let l1 = s.ensemble.l1_norm();
    let mut tracker = MaxwellEnergyTracker::new(lat.h, lat.l - 2.0 * lat.h)?;
    let first = tracker.energy(&s.nodes)?;
    let mut history = vec![EnergyRecord { t: 0.0, energy: first.standard, source: 0.0 }];
    let mut probes: Vec<Probe> = cfg
        .probe
        .iter()
        .map(|(name, p)| Probe { name: name.clone(), u: p.u, series: DecaySeries { offset: -0.5 * p.u, ..DecaySeries::new() } })
        .collect();
    let rays: Vec<_> = cfg.probe.values().map(|p| Ok((p.ray()?, p.component()?))).collect::<Result<_>>()?;
    timings.push("setup", clock.elapsed());

    let clock = Instant::now();
    let (mut source, mut max_field, mut vmargin, mut gauss, mut max_energy) = (0.0, 0.0f64, f64::NEG_INFINITY, 0.0f64, 0.0f64);
    let mut monitor = GrowthMonitor::new(cfg.run.instability_factor, s.grid.energy());
    let mut energy_rows = Vec::new();
    let dt = g.dt;
    for _ in 0..g.steps() {
        let info = coupled_step(&mut s, dt)?;
        monitor.observe(info.t, info.field_energy)?;
        tracker.record(&s.nodes, dt)?;
        source += info.source_work;
        max_field = max_field.max(info.max_field);
        max_energy = max_energy.max(info.field_energy);
        let e = tracker.energy(&s.nodes)?;
        history.push(EnergyRecord { t: info.t, energy: e.standard, source });
        let ve = vlasov_energy(&s.ensemble);
        let vm = vlasov_energy_margin(&ve, l1);
        vmargin = vmargin.max(vm);
        let rho = deposit_charge(&s.ensemble, &lat)?;
        gauss = gauss.max(s.grid.gauss_residual(&rho));
        energy_rows.push(vec![info.t, e.standard, source, vm, e.scaling_interior, e.scaling_exterior]);
        for (p, (ray, comp)) in probes.iter_mut().zip(&rays) {
            p.series.push(info.t, probe(&s.nodes, ray, *comp)?);
        }
    }
    timings.push("coupled-steps", clock.elapsed());
    let span = format!("t in [0, {:.2}], {} steps", s.t(), g.steps());

    let q = grid_charge(&deposit_charge(&s.ensemble, &lat)?, &lat);
    let drift = if q0 == 0.0 { (q - q0).abs() } else { ((q - q0) / q0).abs() };
    rec.check("charge", drift, Threshold::AtMost(CHARGE_TOL), Origin::Design, format!("grid charge {q0:e} -> {q:e}, {span}"));
    let gauss_rel = if rho_scale > 0.0 { gauss / rho_scale } else { gauss };
    rec.check("gauss-law", gauss_rel, Threshold::AtMost(GAUSS_TOL), Origin::Design, format!("max |div E - rho| / max |rho|, {span}"));
    if vacuum {
        rec.check("vacuum-field", max_energy, Threshold::Equal(0.0), Origin::Design, "zero data leaves the field at zero");
    } else {
        rec.check("max-field", max_field, Threshold::AtMost(MAX_FIELD), Origin::Design, span.clone());
    }
    let m = energy_inequality_check(&history)?;
    rec.check("maxwell-energy", m.margin, Threshold::AtMost(ENERGY_TOL), Origin::Design, format!("worst at t = {}", m.t_worst));
    rec.check("vlasov-energy", vmargin, Threshold::AtMost(ENERGY_TOL), Origin::Design, span.clone());
    rec.report.note("initial_standard_energy", first.standard);
    rec.report.note("source_integral", source);

    let [lo, hi] = cfg.run.window;
    let mut tables = vec![Table {
        file: "energy.csv".into(),
        header: vec!["t", "standard", "source", "vlasov_margin", "scaling_interior", "scaling_exterior"],
        rows: energy_rows,
    }];
    for p in &probes {
        let name = format!("slope.{}", p.name);
        let w = p.series.window(lo, hi);
        let fit = if vacuum { None } else { Some(decay_slope(&w)) };
        let stderr = match fit {
            None => {
                rec.skip(&name, Threshold::Within(SLOPE_WINDOW.0, SLOPE_WINDOW.1), Origin::Rate, "no field without data");
                0.0
            }
            Some(Ok(f)) => {
                let at = format!("u = {}, t in [{lo}, {hi}], {} samples, stderr {:.3e}", p.u, w.len(), f.stderr);
                rec.check(&name, f.slope, Threshold::Within(SLOPE_WINDOW.0, SLOPE_WINDOW.1), Origin::Rate, at);
                rec.report.note(&name, f.slope);
                f.stderr
            }
            Some(Err(e)) => {
                rec.check(&name, f64::NAN, Threshold::Within(SLOPE_WINDOW.0, SLOPE_WINDOW.1), Origin::Rate, e.to_string());
                0.0
            }
        };
        let rows = p.series.t.iter().zip(&p.series.q).map(|(t, q)| vec![*t, p.u, *q, stderr]).collect();
        tables.push(Table { file: format!("probe_{}.csv", p.name), header: vec!["t", "u", "value", "stderr"], rows });
    }

    if let (true, Some(dir)) = (cfg.run.snapshots, out) {
        let snap = dir.join("snapshots");
        fs::create_dir_all(&snap)?;
        let mut w = BufWriter::new(File::create(snap.join("fields.bin"))?);
        s.grid.write_snapshot(&mut w)?;
        w.flush()?;
        let mut w = BufWriter::new(File::create(snap.join("ensemble.bin"))?);
        s.ensemble.write_snapshot(&mut w)?;
        w.flush()?;
    }
    Ok(tables)
}

pub fn run(cfg: &RunConfig, out: Option<&Path>) -> Result<Outcome> {
    let mut rec = Recorder::new(cfg.experiment.name(), cfg.ensemble.seed, &cfg.tolerances);
    let mut timings = Timings::default();
    if cfg.run.solver_checks {
        let clock = Instant::now();
        solver_checks(&mut rec)?;
        timings.push("solver-checks", clock.elapsed());
    }
    let tables = coupled(&mut rec, cfg, out, &mut timings)?;
    Ok(Outcome { report: rec.finish(), timings, tables })
}
