//! Experiment orchestration for `vmnull`: run configurations, the four
//! experiments and their reports.

pub mod config;
pub mod free_decay;
pub mod identities;
pub mod pure_charge;
pub mod report;
pub mod vm;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::Result;

pub use config::{Experiment, RunConfig};
pub use report::{Check, Origin, Report, Status, Threshold};

/// Wall-clock time per phase of an experiment. Kept apart from the report
/// so that reports replay bit for bit.
#[derive(Debug, Clone, Default)]
pub struct Timings(pub Vec<(String, Duration)>);

impl Timings {
    pub fn push(&mut self, phase: &str, d: Duration) {
        self.0.push((phase.into(), d));
    }

    pub fn get(&self, phase: &str) -> Option<Duration> {
        self.0.iter().find(|(p, _)| p == phase).map(|(_, d)| *d)
    }

    pub fn total(&self) -> Duration {
        self.0.iter().map(|(_, d)| *d).sum()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["phase", "seconds"])?;
        for (p, d) in &self.0 {
            w.write_record([p.clone(), format!("{:.6}", d.as_secs_f64())])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A CSV table produced by an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

/// Everything an experiment returns.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub report: Report,
    pub timings: Timings,
    pub tables: Vec<Table>,
}

impl Outcome {
    /// Writes the report, the summary, the tables and the timings into
    /// `dir`; with `gnuplot`, also a script plotting the tables. Returns the
    /// files written.
    pub fn write(&self, dir: &Path, gnuplot: bool) -> Result<Vec<PathBuf>> {
        self.report.write(dir)?;
        let mut files = vec![dir.join("report.csv"), dir.join("summary.txt")];
        let mut tables = Vec::new();
        for t in &self.tables {
            let p = dir.join(&t.file);
            report::write_table(&p, &t.header, &t.rows)?;
            tables.push(p);
        }
        files.extend(tables.iter().cloned());
        let tp = dir.join("timings.csv");
        self.timings.write_csv(&tp)?;
        files.push(tp);
        if gnuplot {
            let gp = dir.join("plot.gp");
            fs::write(&gp, report::gnuplot_script(&tables))?;
            files.push(gp);
        }
        Ok(files)
    }
}

/// Runs the configured experiment. `out` receives snapshots of coupled
/// runs when they are enabled.
pub fn run(cfg: &RunConfig, out: Option<&Path>) -> Result<Outcome> {
    match cfg.experiment {
        Experiment::Identities => identities::run(cfg),
        Experiment::FreeDecay => free_decay::run(cfg),
        Experiment::PureCharge => pure_charge::run(cfg),
        Experiment::VmRun => vm::run(cfg, out),
    }
}
