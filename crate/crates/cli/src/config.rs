//! Run configuration.
//!
//! A config file is TOML restricted to top-level keys and one level of
//! sections. Every experiment has a complete default configuration; a file
//! only needs the keys it changes. Unknown keys are rejected.
//!
//! ```toml
//! experiment = "vm-run"
//!
//! [grid]
//! l = 20.0
//! h = 0.8333333333333334
//! dt = 0.4
//! t_final = 14.0
//!
//! [ensemble]
//! n = 1000000
//! epsilon = 1.0
//!
//! [probe.alpha]
//! u = 1.0
//! direction = [0.0, 1.0, 0.0]
//! component = "alpha"
//!
//! [tolerances]
//! charge = 1e-12
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use vmnull::diagnostics::{NullComponent, Ray};
use vmnull::dynamics::GaussianData;
use vmnull::fields::yee::Lattice;
use vmnull::operators::FieldId;

/// Number of standard deviations counted as the support of Gaussian data.
pub const SUPPORT_SIGMAS: f64 = 3.0;
/// Margin between the light cone of the support and the box boundary.
pub const DOMAIN_MARGIN: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Identities,
    FreeDecay,
    PureCharge,
    VmRun,
}

impl Experiment {
    pub const ALL: [Experiment; 4] = [Experiment::Identities, Experiment::FreeDecay, Experiment::PureCharge, Experiment::VmRun];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Identities => "identities",
            Experiment::FreeDecay => "free-decay",
            Experiment::PureCharge => "pure-charge",
            Experiment::VmRun => "vm-run",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL.into_iter().find(|e| e.name() == s).ok_or_else(|| anyhow!("unknown experiment '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Half-width of the box `[-L, L]^3`.
    pub l: f64,
    /// Cell size; `2L/h` must be an integer.
    pub h: f64,
    pub dt: f64,
    pub t_final: f64,
}

impl GridConfig {
    pub fn cells(&self) -> Result<usize> {
        let n = 2.0 * self.l / self.h;
        let r = n.round();
        if !(n.is_finite() && r >= 4.0 && (n - r).abs() < 1e-6 * r) {
            bail!("grid: 2L/h = {n} is not an integer number of cells (at least 4)");
        }
        Ok(r as usize)
    }

    pub fn lattice(&self) -> Result<Lattice> {
        Ok(Lattice::new(self.cells()?, self.l)?)
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt - 1e-9).ceil().max(0.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    /// Number of macro-particles.
    pub n: usize,
    pub seed: u64,
    /// Total mass of the initial density.
    pub epsilon: f64,
    pub center: [f64; 3],
    pub sigma_x: [f64; 3],
    pub mean_v: [f64; 3],
    pub sigma_v: [f64; 3],
}

impl EnsembleConfig {
    pub fn data(&self) -> GaussianData {
        GaussianData {
            amplitude: self.epsilon,
            center: self.center,
            sigma_x: self.sigma_x,
            mean_v: self.mean_v,
            sigma_v: self.sigma_v,
        }
    }

    /// Radius of the ball that carries the data for the domain rule.
    pub fn support(&self) -> f64 {
        Vector3::from(self.center).norm() + SUPPORT_SIGMAS * self.sigma_x.iter().fold(0.0f64, |m, s| m.max(*s))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    /// Retarded time of the outgoing ray `r = t - u`.
    pub u: f64,
    pub direction: [f64; 3],
    /// One of `alpha`, `alphabar`, `rho`, `sigma`.
    pub component: String,
}

impl ProbeConfig {
    pub fn ray(&self) -> Result<Ray> {
        let d = Vector3::from(self.direction);
        if !(d.norm() > 0.0 && d.norm().is_finite()) {
            bail!("probe direction must be a nonzero vector");
        }
        Ok(Ray { u: Some(self.u), direction: d.normalize() })
    }

    pub fn component(&self) -> Result<NullComponent> {
        Ok(NullComponent::parse(&self.component)?)
    }
}

/// Experiment-specific knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunParams {
    /// Random points for the identity suite.
    pub points: usize,
    /// Points used for the finite-difference refinement study.
    pub fd_points: usize,
    /// Coarse finite-difference step; the fine step is half of it.
    pub fd_step: f64,
    /// Fit window `[t_lo, t_hi]` for decay slopes.
    pub window: [f64; 2],
    /// Samples in the decay fit window (free transport).
    pub samples: usize,
    /// Monte Carlo samples for the Klainerman-Sobolev right-hand side.
    pub ks_samples: usize,
    /// Charge of the pure-charge field.
    pub charge: f64,
    /// Abort a coupled run once the field energy exceeds this multiple of
    /// its initial value (or of the first nonzero value).
    pub instability_factor: f64,
    /// Run the vacuum solver checks before a coupled run.
    pub solver_checks: bool,
    /// Write final field and ensemble snapshots.
    pub snapshots: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhiConfig {
    /// Generators whose `Phi` coefficients are integrated along particles.
    pub fields: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    /// Output directory; the command line may override it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub grid: GridConfig,
    pub ensemble: EnsembleConfig,
    pub phi: PhiConfig,
    pub run: RunParams,
    pub probe: BTreeMap<String, ProbeConfig>,
    /// Overrides of named check thresholds.
    pub tolerances: BTreeMap<String, f64>,
}

fn probe(u: f64, direction: [f64; 3], component: &str) -> ProbeConfig {
    ProbeConfig { u, direction, component: component.into() }
}

impl RunConfig {
    /// Complete default configuration of an experiment.
    pub fn defaults(experiment: Experiment) -> Self {
        let mut cfg = RunConfig {
            experiment,
            out: None,
            grid: GridConfig { l: 20.0, h: 40.0 / 48.0, dt: 0.4, t_final: 14.0 },
            ensemble: EnsembleConfig {
                n: 1_000_000,
                seed: 1,
                epsilon: 1.0,
                center: [0.0; 3],
                sigma_x: [1.2, 1.0, 0.8],
                mean_v: [0.3, 0.0, 0.0],
                sigma_v: [0.15; 3],
            },
            phi: PhiConfig { fields: vec![] },
            run: RunParams {
                points: 10_000,
                fd_points: 200,
                fd_step: 2e-2,
                window: [4.0, 14.0],
                samples: 20,
                ks_samples: 4000,
                charge: 1.0,
                instability_factor: 100.0,
                solver_checks: true,
                snapshots: true,
            },
            probe: BTreeMap::new(),
            tolerances: BTreeMap::new(),
        };
        match experiment {
            Experiment::Identities => {}
            Experiment::FreeDecay => {
                cfg.grid = GridConfig { l: 20.0, h: 40.0 / 48.0, dt: 0.01, t_final: 50.0 };
                cfg.ensemble.n = 1_000_000;
                cfg.ensemble.seed = 7;
                cfg.ensemble.sigma_x = [1.0; 3];
                cfg.ensemble.mean_v = [0.0; 3];
                cfg.ensemble.sigma_v = [0.5; 3];
                cfg.run.window = [5.0, 40.0];
            }
            Experiment::PureCharge => {
                cfg.run.window = [10.0, 1000.0];
                cfg.phi.fields = vec!["boost1".into(), "boost2".into(), "boost3".into()];
            }
            Experiment::VmRun => {
                cfg.probe.insert("alpha".into(), probe(1.0, [0.0, 1.0, 0.0], "alpha"));
                cfg.probe.insert("rho".into(), probe(1.0, [0.0, 1.0, 0.0], "rho"));
            }
        }
        cfg
    }

    /// Parses a config document on top of the defaults of its experiment.
    pub fn parse(text: &str) -> Result<Self> {
        let user: toml::Table = text.parse().context("config is not valid TOML")?;
        for (k, v) in &user {
            if let toml::Value::Table(t) = v {
                for (kk, vv) in t {
                    if let toml::Value::Table(inner) = vv {
                        // probe sections are the one allowed second level
                        if k != "probe" || inner.values().any(|x| x.is_table()) {
                            bail!("config: nested section [{k}.{kk}] is not allowed");
                        }
                    }
                }
            }
        }
        let experiment: Experiment = match user.get("experiment") {
            Some(toml::Value::String(s)) => s.parse()?,
            Some(_) => bail!("config: 'experiment' must be a string"),
            None => bail!("config: missing 'experiment'"),
        };
        let mut merged = toml::Table::try_from(RunConfig::defaults(experiment))?;
        for (k, v) in user {
            match (merged.get_mut(&k), v) {
                // probe lists replace the defaults wholesale
                (Some(toml::Value::Table(base)), toml::Value::Table(over)) if k != "probe" => {
                    for (kk, vv) in over {
                        base.insert(kk, vv);
                    }
                }
                (_, v) => {
                    merged.insert(k, v);
                }
            }
        }
        let cfg: RunConfig = toml::Value::Table(merged).try_into().context("config does not match the schema")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn phi_fields(&self) -> Result<Vec<FieldId>> {
        self.phi.fields.iter().map(|s| FieldId::parse(s).map_err(Into::into)).collect()
    }

    /// Load-time checks: positivity, the stability limit of the field
    /// solver and the domain rule for coupled runs.
    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if !(g.l > 0.0 && g.h > 0.0 && g.dt > 0.0 && g.t_final > 0.0) {
            bail!("grid: l, h, dt and t_final must be positive");
        }
        self.ensemble.data().validate()?;
        if self.ensemble.n == 0 {
            bail!("ensemble: n must be positive");
        }
        let [lo, hi] = self.run.window;
        if !(lo > 0.0 && hi > lo) {
            bail!("run: window must satisfy 0 < lo < hi");
        }
        if self.run.points == 0 || self.run.fd_points == 0 || self.run.samples < 5 || self.run.ks_samples == 0 {
            bail!("run: points, fd_points and ks_samples must be positive and samples at least 5");
        }
        if !(self.run.fd_step > 0.0 && self.run.instability_factor > 1.0) {
            bail!("run: fd_step must be positive and instability_factor above 1");
        }
        self.phi_fields()?;
        for (name, p) in &self.probe {
            p.ray().with_context(|| format!("probe {name}"))?;
            p.component().with_context(|| format!("probe {name}"))?;
        }
        if self.experiment == Experiment::VmRun {
            g.cells()?;
            let cfl = g.h / 3f64.sqrt();
            if g.dt > cfl * (1.0 + 1e-12) {
                bail!("grid: dt = {} exceeds the stability limit h/sqrt(3) = {cfl}", g.dt);
            }
            let need = g.t_final + self.ensemble.support() + DOMAIN_MARGIN;
            if g.l <= need {
                bail!("grid: L = {} must exceed t_final + support + {DOMAIN_MARGIN} = {need}", g.l);
            }
        }
        Ok(())
    }
}
