//! Check results and their CSV form.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

/// Where a threshold comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    /// A predicted decay rate or growth shape, widened into a window.
    Rate,
    /// An independently computed reference value.
    Oracle,
    /// A numerical tolerance chosen for the method.
    Design,
    /// Set in the run configuration.
    Override,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    AtMost(f64),
    AtLeast(f64),
    Within(f64, f64),
    /// Exact equality with the given value.
    Equal(f64),
}

impl Threshold {
    pub fn admits(&self, v: f64) -> bool {
        match *self {
            Threshold::AtMost(t) => v <= t,
            Threshold::AtLeast(t) => v >= t,
            Threshold::Within(lo, hi) => (lo..=hi).contains(&v),
            Threshold::Equal(t) => v == t,
        }
    }

    /// The same comparison with its bound replaced by an override. Windows
    /// are widened symmetrically to the given half-width.
    pub fn with_bound(&self, b: f64) -> Threshold {
        match *self {
            Threshold::AtMost(_) => Threshold::AtMost(b),
            Threshold::AtLeast(_) => Threshold::AtLeast(b),
            Threshold::Within(lo, hi) => {
                let c = 0.5 * (lo + hi);
                Threshold::Within(c - b, c + b)
            }
            Threshold::Equal(_) => Threshold::Equal(b),
        }
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::AtMost(t) => write!(f, "<= {t:e}"),
            Threshold::AtLeast(t) => write!(f, ">= {t:e}"),
            Threshold::Within(lo, hi) => write!(f, "in [{lo}, {hi}]"),
            Threshold::Equal(t) => write!(f, "== {t:e}"),
        }
    }
}

impl FromStr for Threshold {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || anyhow!("unreadable threshold '{s}'");
        if let Some(r) = s.strip_prefix("<= ") {
            return Ok(Threshold::AtMost(r.parse().map_err(|_| bad())?));
        }
        if let Some(r) = s.strip_prefix(">= ") {
            return Ok(Threshold::AtLeast(r.parse().map_err(|_| bad())?));
        }
        if let Some(r) = s.strip_prefix("== ") {
            return Ok(Threshold::Equal(r.parse().map_err(|_| bad())?));
        }
        let r = s.strip_prefix("in [").and_then(|r| r.strip_suffix(']')).ok_or_else(bad)?;
        let (a, b) = r.split_once(", ").ok_or_else(bad)?;
        Ok(Threshold::Within(a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub value: f64,
    pub threshold: Threshold,
    pub origin: Origin,
    /// Where the worst value occurred; always set on failures.
    pub location: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub experiment: String,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
    /// Extra key/value lines for the summary file (fitted slopes and such).
    pub summary: BTreeMap<String, String>,
}

/// Row layout of `report.csv`.
#[derive(Debug, Serialize, Deserialize)]
struct Row {
    check: String,
    status: Status,
    value: String,
    threshold: String,
    origin: Origin,
    location: String,
}

fn fmt_value(v: f64) -> String {
    // round-trips exactly
    format!("{v:e}")
}

impl Report {
    pub fn new(experiment: &str, seed: u64) -> Self {
        Self { experiment: experiment.into(), seed, ..Default::default() }
    }

    /// Records a measured value against a threshold. A non-finite value
    /// fails. An empty location on a failing check is replaced by a note.
    pub fn check(&mut self, name: &str, value: f64, threshold: Threshold, origin: Origin, location: impl Into<String>) -> Status {
        let ok = value.is_finite() && threshold.admits(value);
        let status = if ok { Status::Pass } else { Status::Fail };
        let mut location = location.into();
        if !ok && location.is_empty() {
            location = "whole run".into();
        }
        self.checks.push(Check { name: name.into(), status, value, threshold, origin, location });
        status
    }

    pub fn skip(&mut self, name: &str, threshold: Threshold, origin: Origin, why: &str) {
        self.checks.push(Check { name: name.into(), status: Status::Skip, value: f64::NAN, threshold, origin, location: why.into() });
    }

    pub fn warn(&mut self, w: impl Into<String>) {
        self.warnings.push(w.into());
    }

    pub fn note(&mut self, key: &str, value: impl fmt::Display) {
        self.summary.insert(key.into(), value.to_string());
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn count(&self, s: Status) -> usize {
        self.checks.iter().filter(|c| c.status == s).count()
    }

    /// No failures; with `strict`, also no skips and no warnings.
    pub fn passed(&self, strict: bool) -> bool {
        self.count(Status::Fail) == 0 && (!strict || (self.count(Status::Skip) == 0 && self.warnings.is_empty()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        for c in &self.checks {
            w.serialize(Row {
                check: c.name.clone(),
                status: c.status,
                value: fmt_value(c.value),
                threshold: c.threshold.to_string(),
                origin: c.origin,
                location: c.location.clone(),
            })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Key/value summary: counts, warnings and the extra notes.
    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        s += &format!("experiment = {}\nseed = {}\n", self.experiment, self.seed);
        s += &format!("pass = {}\nfail = {}\nskip = {}\n", self.count(Status::Pass), self.count(Status::Fail), self.count(Status::Skip));
        s += &format!("warnings = {}\n", self.warnings.len());
        for (i, w) in self.warnings.iter().enumerate() {
            s += &format!("warning.{i} = {w}\n");
        }
        for (k, v) in &self.summary {
            s += &format!("{k} = {v}\n");
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        self.write_csv(&dir.join("report.csv"))?;
        fs::write(dir.join("summary.txt"), self.summary_text())?;
        Ok(())
    }

    /// Reads back a directory written by [`Report::write`].
    pub fn read(dir: &Path) -> Result<Self> {
        let summary = fs::read_to_string(dir.join("summary.txt")).with_context(|| format!("reading summary in {}", dir.display()))?;
        let mut rep = Report::default();
        for line in summary.lines() {
            let Some((k, v)) = line.split_once(" = ") else { continue };
            match k {
                "experiment" => rep.experiment = v.into(),
                "seed" => rep.seed = v.parse()?,
                "pass" | "fail" | "skip" | "warnings" => {}
                k if k.starts_with("warning.") => rep.warnings.push(v.into()),
                k => {
                    rep.summary.insert(k.into(), v.into());
                }
            }
        }
        let mut r = csv::Reader::from_path(dir.join("report.csv"))?;
        for row in r.deserialize() {
            let row: Row = row?;
            rep.checks.push(Check {
                name: row.check,
                status: row.status,
                value: row.value.parse().map_err(|_| anyhow!("bad value '{}'", row.value))?,
                threshold: row.threshold.parse()?,
                origin: row.origin,
                location: row.location,
            });
        }
        Ok(rep)
    }

    /// One line per check, for the terminal.
    pub fn render(&self) -> String {
        let mut s = format!("{} (seed {})\n", self.experiment, self.seed);
        for c in &self.checks {
            let tag = match c.status {
                Status::Pass => "PASS",
                Status::Fail => "FAIL",
                Status::Skip => "SKIP",
            };
            s += &format!("  {tag} {:<32} {:>14} {} [{:?}]", c.name, format!("{:.4e}", c.value), c.threshold, c.origin);
            if !c.location.is_empty() {
                s += &format!(" at {}", c.location);
            }
            s.push('\n');
        }
        for w in &self.warnings {
            s += &format!("  warning: {w}\n");
        }
        s
    }
}

/// Threshold table with per-run overrides.
pub struct Tolerances {
    overrides: BTreeMap<String, f64>,
    used: std::cell::RefCell<Vec<String>>,
}

impl Tolerances {
    pub fn new(overrides: &BTreeMap<String, f64>) -> Self {
        Self { overrides: overrides.clone(), used: Default::default() }
    }

    /// The threshold for `name`, overridden if the config names it.
    pub fn get(&self, name: &str, default: Threshold, origin: Origin) -> (Threshold, Origin) {
        match self.overrides.get(name) {
            Some(b) => {
                self.used.borrow_mut().push(name.into());
                (default.with_bound(*b), Origin::Override)
            }
            None => (default, origin),
        }
    }

    /// Override keys that no check asked for.
    pub fn unused(&self) -> Vec<String> {
        let used = self.used.borrow();
        self.overrides.keys().filter(|k| !used.contains(k)).cloned().collect()
    }
}

/// Report plus thresholds: the usual way experiments record checks.
pub struct Recorder {
    pub report: Report,
    pub tol: Tolerances,
}

impl Recorder {
    pub fn new(experiment: &str, seed: u64, overrides: &BTreeMap<String, f64>) -> Self {
        Self { report: Report::new(experiment, seed), tol: Tolerances::new(overrides) }
    }

    pub fn check(&mut self, name: &str, value: f64, default: Threshold, origin: Origin, location: impl Into<String>) -> Status {
        let (t, o) = self.tol.get(name, default, origin);
        self.report.check(name, value, t, o, location)
    }

    pub fn skip(&mut self, name: &str, default: Threshold, origin: Origin, why: &str) {
        let (t, o) = self.tol.get(name, default, origin);
        self.report.skip(name, t, o, why);
    }

    pub fn finish(mut self) -> Report {
        for k in self.tol.unused() {
            self.report.warn(format!("tolerance override '{k}' matches no check"));
        }
        self.report
    }
}

/// Writes a two-column-or-more CSV with a header.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    for r in rows {
        if r.len() != header.len() {
            bail!("row width {} does not match header width {}", r.len(), header.len());
        }
        w.write_record(r.iter().map(|v| fmt_value(*v)))?;
    }
    w.flush()?;
    Ok(())
}

/// gnuplot script plotting every listed CSV (log-log, first column against
/// the third).
pub fn gnuplot_script(files: &[PathBuf]) -> String {
    let mut s = String::from("set datafile separator ','\nset logscale xy\nset key left bottom\nset xlabel 't'\n");
    let parts: Vec<String> = files
        .iter()
        .map(|f| {
            let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            format!("'{name}' using 1:(abs($3)) skip 1 with linespoints title '{name}'")
        })
        .collect();
    if !parts.is_empty() {
        s += "plot ";
        s += &parts.join(", \\\n     ");
        s.push('\n');
    }
    s
}
