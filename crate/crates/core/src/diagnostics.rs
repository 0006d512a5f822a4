//! Energy norms and null-cone fluxes, pointwise decay inequalities for
//! velocity averages, quadrature checks of the foliation and integral
//! lemmas, and log-log slope fitting.

use std::collections::BTreeMap;
use std::f64::consts::{PI, SQRT_2};

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dynamics::{Ensemble, FreeSolution, GaussianData};
use crate::error::{Error, Result};
use crate::fields::yee::NodeField;
use crate::geometry::{null_decompose_in, spherical_frame, NullDecomposition, SphericalFrame};
use crate::operators::{iterated_lift, weights, words, Phase7};

fn tau(s: f64) -> f64 {
    (1.0 + s * s).sqrt()
}

/// Vlasov energy at time `t`: the `L^1` norm and the largest flux
/// `||(v^Lbar / v^0) g||_{L^1(C_u(t))}` over `u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VlasovEnergy {
    pub l1: f64,
    pub cone_sup: f64,
    /// A `u` attaining the supremum.
    pub u_star: f64,
}

/// Flux of the ensemble through `C_u(t)`. The map `s -> s - |X(s)|` is
/// increasing along every timelike path, so a particle crosses `C_u(t)` once
/// exactly when `-|X(0)| <= u < t - |X(t)|`, contributing `|w| / sqrt(2)`.
pub fn cone_flux(e: &Ensemble, u: f64) -> f64 {
    let t = e.t;
    e.particles
        .iter()
        .filter(|p| -p.x_init.norm() <= u && u < t - p.x.norm())
        .map(|p| p.w.abs())
        .sum::<f64>()
        / SQRT_2
}

/// Both terms of the Vlasov energy; the supremum over `u` is exact (sweep over
/// crossing intervals).
pub fn vlasov_energy(e: &Ensemble) -> VlasovEnergy {
    let t = e.t;
    let mut events: Vec<(f64, f64)> = Vec::with_capacity(2 * e.len());
    for p in &e.particles {
        let (lo, hi) = (-p.x_init.norm(), t - p.x.norm());
        if lo < hi {
            events.push((lo, p.w.abs()));
            events.push((hi, -p.w.abs()));
        }
    }
    // closing events sort before opening ones at equal u
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let (mut run, mut best, mut u_star) = (0.0, 0.0, 0.0);
    for (u, dw) in events {
        run += dw;
        if run > best {
            best = run;
            u_star = u;
        }
    }
    VlasovEnergy { l1: e.l1_norm(), cone_sup: best / SQRT_2, u_star }
}

/// `l1(t) + sup_u flux(t) - 2 l1(0)` for sourceless transport, where the
/// inequality with its factor 2 requires a nonpositive value.
pub fn vlasov_energy_margin(now: &VlasovEnergy, l1_initial: f64) -> f64 {
    now.l1 + now.cone_sup - 2.0 * l1_initial
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EnergyKind {
    /// `E^0`.
    Standard,
    /// `E^{S, u >= 0}`: interior of the light cone.
    ScalingInterior,
    /// `E^{S, u <= 0}`: exterior of the light cone.
    ScalingExterior,
}

impl EnergyKind {
    pub const ALL: [EnergyKind; 3] = [EnergyKind::Standard, EnergyKind::ScalingInterior, EnergyKind::ScalingExterior];

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "E0" | "standard" => Ok(Self::Standard),
            "ES+" | "scaling-interior" => Ok(Self::ScalingInterior),
            "ES-" | "scaling-exterior" => Ok(Self::ScalingExterior),
            _ => Err(Error::Invalid(format!("unknown energy kind {s}"))),
        }
    }

    fn slice_density(self, d: &NullDecomposition, t: f64, r: f64) -> f64 {
        let (a2, ab2) = (d.alpha_norm().powi(2), d.alpha_bar_norm().powi(2));
        let (r2, s2) = (d.rho * d.rho, d.sigma * d.sigma);
        match self {
            Self::Standard => a2 + ab2 + 2.0 * r2 + 2.0 * s2,
            _ => tau(t + r) * (a2 + r2 + s2) + tau(t - r) * ab2,
        }
    }

    fn cone_density(self, d: &NullDecomposition, t: f64, r: f64) -> f64 {
        let (a2, r2, s2) = (d.alpha_norm().powi(2), d.rho * d.rho, d.sigma * d.sigma);
        match self {
            Self::Standard => a2 + r2 + s2,
            _ => tau(t + r) * a2 + tau(t - r) * (r2 + s2),
        }
    }

    fn slice_region(self, t: f64, r: f64) -> bool {
        match self {
            Self::Standard => true,
            Self::ScalingInterior => r <= t,
            Self::ScalingExterior => r >= t,
        }
    }

    fn cone_region(self, u: f64, t: f64) -> bool {
        match self {
            Self::Standard => u <= t,
            Self::ScalingInterior => (0.0..=t).contains(&u),
            Self::ScalingExterior => u <= 0.0,
        }
    }
}

/// The three weighted Maxwell energies.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MaxwellEnergy {
    pub standard: f64,
    pub scaling_interior: f64,
    pub scaling_exterior: f64,
}

impl MaxwellEnergy {
    pub fn get(&self, kind: EnergyKind) -> f64 {
        match kind {
            EnergyKind::Standard => self.standard,
            EnergyKind::ScalingInterior => self.scaling_interior,
            EnergyKind::ScalingExterior => self.scaling_exterior,
        }
    }
}

/// Slice integral of the named energy density over nodes inside the ball of
/// radius `radius` (the origin node is skipped; the null frame is undefined
/// there).
pub fn maxwell_slice_energy(nodes: &NodeField, kind: EnergyKind, radius: f64) -> Result<f64> {
    let t = nodes.t;
    let h3 = nodes.lattice.h.powi(3);
    let mut total = 0.0;
    for i in nodes.interior() {
        for j in nodes.interior() {
            for k in nodes.interior() {
                let x = nodes.position(i, j, k);
                let r = x.norm();
                if r > radius || r == 0.0 || !kind.slice_region(t, r) {
                    continue;
                }
                let fr = spherical_frame(&x)?;
                let d = null_decompose_in(&nodes.at(i, j, k), &fr);
                total += kind.slice_density(&d, t, r) * h3;
            }
        }
    }
    Ok(total)
}

/// Accumulates the cone parts of the Maxwell energies from a sequence of
/// snapshots. Spacetime integrals over `u`-bins of width `bin` are collected
/// with the rectangle rule in time; `int_{C_u} g dC_u` is recovered as
/// `sqrt(2)` times the bin integral over the bin width (first order in the
/// bin width).
#[derive(Debug, Clone)]
pub struct MaxwellEnergyTracker {
    pub bin: f64,
    pub radius: f64,
    bins: BTreeMap<i64, [f64; 3]>,
}

impl MaxwellEnergyTracker {
    pub fn new(bin: f64, radius: f64) -> Result<Self> {
        if !(bin > 0.0 && radius > 0.0) {
            return Err(Error::Invalid("bin width and radius must be positive".into()));
        }
        Ok(Self { bin, radius, bins: BTreeMap::new() })
    }

    fn key(&self, u: f64) -> i64 {
        (u / self.bin).floor() as i64
    }

    /// Adds `dt` times the snapshot's cone densities.
    pub fn record(&mut self, nodes: &NodeField, dt: f64) -> Result<()> {
        let t = nodes.t;
        let h3 = nodes.lattice.h.powi(3);
        for i in nodes.interior() {
            for j in nodes.interior() {
                for k in nodes.interior() {
                    let x = nodes.position(i, j, k);
                    let r = x.norm();
                    if r > self.radius || r == 0.0 {
                        continue;
                    }
                    let fr = spherical_frame(&x)?;
                    let d = null_decompose_in(&nodes.at(i, j, k), &fr);
                    let key = self.key(t - r);
                    let slot = self.bins.entry(key).or_insert([0.0; 3]);
                    for (m, kind) in EnergyKind::ALL.iter().enumerate() {
                        slot[m] += kind.cone_density(&d, t, r) * h3 * dt;
                    }
                }
            }
        }
        Ok(())
    }

    /// Cone integral of the bin containing `u`, when any snapshot reached it.
    pub fn cone_integral(&self, kind: EnergyKind, u: f64) -> Option<f64> {
        let m = EnergyKind::ALL.iter().position(|k| *k == kind).unwrap_or(0);
        self.bins.get(&self.key(u)).map(|v| SQRT_2 * v[m] / self.bin)
    }

    /// Largest cone integral among bins lying wholly in the kind's `u` range.
    pub fn cone_sup(&self, kind: EnergyKind, t: f64) -> f64 {
        let m = EnergyKind::ALL.iter().position(|k| *k == kind).unwrap_or(0);
        self.bins
            .iter()
            .filter(|(k, _)| {
                let lo = **k as f64 * self.bin;
                kind.cone_region(lo, t) && kind.cone_region(lo + self.bin, t)
            })
            .map(|(_, v)| SQRT_2 * v[m] / self.bin)
            .fold(0.0, f64::max)
    }

    /// All three energies at the snapshot's time.
    pub fn energy(&self, nodes: &NodeField) -> Result<MaxwellEnergy> {
        let t = nodes.t;
        let e = |k| -> Result<f64> { Ok(maxwell_slice_energy(nodes, k, self.radius)? + self.cone_sup(k, t)) };
        Ok(MaxwellEnergy {
            standard: e(EnergyKind::Standard)?,
            scaling_interior: e(EnergyKind::ScalingInterior)?,
            scaling_exterior: e(EnergyKind::ScalingExterior)?,
        })
    }
}

/// One record of a run's Maxwell energy history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRecord {
    pub t: f64,
    pub energy: f64,
    /// `int_0^t int |G_{mu 0} J^mu| dx ds`.
    pub source: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginReport {
    /// `max_t E(t) - (2 E(0) + 8 source(t))`; nonpositive when the inequality
    /// holds.
    pub margin: f64,
    pub t_worst: f64,
}

pub fn energy_inequality_check(history: &[EnergyRecord]) -> Result<MarginReport> {
    let first = history.first().ok_or_else(|| Error::Insufficient("empty energy history".into()))?;
    let mut out = MarginReport { margin: f64::NEG_INFINITY, t_worst: first.t };
    for r in history {
        let m = r.energy - (2.0 * first.energy + 8.0 * r.source);
        if m > out.margin {
            out = MarginReport { margin: m, t_worst: r.t };
        }
    }
    Ok(out)
}

/// `int f(t, x, v) phi(v) dv` for the free solution with Gaussian data, by
/// product Gauss-Legendre in `w = v / v^0` (Jacobian `(1 - |w|^2)^{-5/2}`)
/// over the box where the integrand is non-negligible.
pub fn free_velocity_integral(f0: &GaussianData, t: f64, x: &Vector3<f64>, phi: &dyn Fn(&Vector3<f64>) -> f64, nodes: usize) -> Result<f64> {
    f0.validate()?;
    let k = 8.0;
    let gl = gauss_quad::GaussLegendre::new(nodes.try_into().map_err(|_| Error::Invalid("need quadrature nodes".into()))?);
    let pairs: Vec<(f64, f64)> = gl.iter().map(|(a, b)| (*a, *b)).collect();
    let vlo: [f64; 3] = std::array::from_fn(|a| f0.mean_v[a] - k * f0.sigma_v[a]);
    let vhi: [f64; 3] = std::array::from_fn(|a| f0.mean_v[a] + k * f0.sigma_v[a]);
    if t == 0.0 {
        let mut total = 0.0;
        let half: [f64; 3] = std::array::from_fn(|a| 0.5 * (vhi[a] - vlo[a]));
        let mid: [f64; 3] = std::array::from_fn(|a| 0.5 * (vhi[a] + vlo[a]));
        for &(n0, w0) in &pairs {
            for &(n1, w1) in &pairs {
                for &(n2, w2) in &pairs {
                    let v = Vector3::new(mid[0] + half[0] * n0, mid[1] + half[1] * n1, mid[2] + half[2] * n2);
                    total += w0 * w1 * w2 * f0.density(x, &v) * phi(&v);
                }
            }
        }
        return Ok(total * half[0] * half[1] * half[2]);
    }
    // bounding box of w over the velocity box
    let mmin: [f64; 3] = std::array::from_fn(|a| if vlo[a] <= 0.0 && vhi[a] >= 0.0 { 0.0 } else { vlo[a].abs().min(vhi[a].abs()) });
    let mut lo = [0.0; 3];
    let mut hi = [0.0; 3];
    for a in 0..3 {
        let others: f64 = (0..3).filter(|b| *b != a).map(|b| mmin[b] * mmin[b]).sum();
        let wl = vlo[a] / (1.0 + vlo[a] * vlo[a] + others).sqrt();
        let wh = vhi[a] / (1.0 + vhi[a] * vhi[a] + others).sqrt();
        // spatial constraint |x - t w - c| <= k sigma_x
        let xl = (x[a] - f0.center[a] - k * f0.sigma_x[a]) / t;
        let xh = (x[a] - f0.center[a] + k * f0.sigma_x[a]) / t;
        lo[a] = wl.max(xl).max(-1.0);
        hi[a] = wh.min(xh).min(1.0);
        if lo[a] >= hi[a] {
            return Ok(0.0);
        }
    }
    let half: [f64; 3] = std::array::from_fn(|a| 0.5 * (hi[a] - lo[a]));
    let mid: [f64; 3] = std::array::from_fn(|a| 0.5 * (hi[a] + lo[a]));
    let mut total = 0.0;
    for &(n0, w0) in &pairs {
        for &(n1, w1) in &pairs {
            for &(n2, w2) in &pairs {
                let w = Vector3::new(mid[0] + half[0] * n0, mid[1] + half[1] * n1, mid[2] + half[2] * n2);
                let s = 1.0 - w.norm_squared();
                if s <= 0.0 {
                    continue;
                }
                let v = w / s.sqrt();
                let jac = s.powf(-2.5);
                total += w0 * w1 * w2 * f0.density(&(x - w * t), &v) * phi(&v) * jac;
            }
        }
    }
    Ok(total * half[0] * half[1] * half[2])
}

/// Default node count per axis for [`free_velocity_integral`].
pub const VELOCITY_NODES: usize = 40;

/// Left side `int |g|(t, x, v) dv` of the Klainerman-Sobolev inequality.
pub fn ks_lhs(f0: &GaussianData, t: f64, x: &Vector3<f64>) -> Result<f64> {
    free_velocity_integral(f0, t, x, &|_| 1.0, VELOCITY_NODES)
}

/// Right side `sum_{|beta| <= 3} ||Zhat^beta g||_{L^1_{x,v}}` for the free
/// solution, which is independent of time because every lifted field
/// commutes with free transport. Monte Carlo at `t = 0` with importance
/// sampling from a Gaussian widened by 1.5 in every direction.
pub fn ks_rhs(f0: &GaussianData, samples: usize, seed: u64) -> Result<f64> {
    f0.validate()?;
    if samples == 0 {
        return Err(Error::Invalid("need at least one sample".into()));
    }
    let g = FreeSolution(*f0);
    let ws = words(3);
    let widen = 1.5;
    let q = GaussianData {
        amplitude: 1.0,
        center: f0.center,
        sigma_x: f0.sigma_x.map(|s| s * widen),
        mean_v: f0.mean_v,
        sigma_v: f0.sigma_v.map(|s| s * widen),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..samples {
        let mut y = Phase7::zeros();
        for a in 0..3 {
            let z: f64 = StandardNormal.sample(&mut rng);
            y[1 + a] = q.center[a] + q.sigma_x[a] * z;
        }
        for a in 0..3 {
            let z: f64 = StandardNormal.sample(&mut rng);
            y[4 + a] = q.mean_v[a] + q.sigma_v[a] * z;
        }
        let dens = q.density(&Vector3::new(y[1], y[2], y[3]), &Vector3::new(y[4], y[5], y[6]));
        let mut s = 0.0;
        for w in &ws {
            s += iterated_lift(w, &g, &y)?.abs();
        }
        total += s / dens;
    }
    Ok(total / samples as f64)
}

/// `lhs * tau_+^2 * tau_- / rhs` at `(t, x)`.
pub fn ks_ratio(f0: &GaussianData, t: f64, x: &Vector3<f64>, rhs: f64) -> Result<f64> {
    let lhs = ks_lhs(f0, t, x)?;
    if rhs == 0.0 {
        if lhs > 0.0 {
            return Err(Error::Invalid("right side vanishes while the left side does not".into()));
        }
        return Ok(0.0);
    }
    let r = x.norm();
    Ok(lhs * tau(t + r).powi(2) * tau(t - r) / rhs)
}

/// Constant in `int |g| dv/(v^0)^2 <= (C / tau_+) sum_z int |z| |g| dv` for
/// `|x| >= t`, from the chain `1/(v^0)^2 <= 2|x - t v/v^0| / |x|` and
/// `1/|x| <= 3/tau_+` on `|x| >= 1` (with the weight `1` covering `|x| < 1`).
pub const EXTERIOR_CONSTANT: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExteriorCheck {
    pub lhs: f64,
    /// `(1/tau_+) sum_z int |z| |g| dv` over the ten weights.
    pub rhs: f64,
    /// `lhs - C rhs`.
    pub margin: f64,
}

impl ExteriorCheck {
    pub fn ratio(&self) -> f64 {
        if self.rhs == 0.0 {
            0.0
        } else {
            self.lhs / self.rhs
        }
    }
}

pub fn exterior_decay_check(f0: &GaussianData, t: f64, x: &Vector3<f64>) -> Result<ExteriorCheck> {
    let r = x.norm();
    if r < t {
        return Err(Error::Invalid(format!("point |x| = {r} lies inside the cone t = {t}")));
    }
    let lhs = free_velocity_integral(f0, t, x, &|v| 1.0 / (1.0 + v.norm_squared()), VELOCITY_NODES)?;
    let sum = free_velocity_integral(f0, t, x, &|v| weights(t, x, v).iter().map(|z| z.abs()).sum(), VELOCITY_NODES)?;
    let rhs = sum / tau(t + r);
    Ok(ExteriorCheck { lhs, rhs, margin: lhs - EXTERIOR_CONSTANT * rhs })
}

/// The two foliations of `[0, t] x R^3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoliationCheck {
    pub slices: f64,
    pub cones: f64,
    pub relative_difference: f64,
}

fn sphere_average(g: &dyn Fn(f64, &Vector3<f64>) -> f64, s: f64, r: f64, n: usize) -> f64 {
    let gl = gauss_quad::GaussLegendre::new(n.try_into().expect("n > 0"));
    let nphi = 2 * n;
    let mut acc = 0.0;
    for (mu, w) in gl.iter() {
        let st = (1.0 - mu * mu).sqrt();
        for k in 0..nphi {
            let ph = 2.0 * PI * (k as f64 + 0.5) / nphi as f64;
            acc += w * g(s, &(Vector3::new(st * ph.cos(), st * ph.sin(), *mu) * r));
        }
    }
    acc * 2.0 * PI / nphi as f64
}

/// `int_0^t int_{Sigma_s} g` against `int du / sqrt(2) int_{C_u(t)} g dC_u`
/// with `dC_u = r^2 dubar dS^2 / sqrt(2)`. Both use adaptive
/// double-exponential quadrature in their own coordinates (`(s, r)` and
/// `(u, ubar)`); `reach` bounds the spatial support (the integrand must be
/// negligible beyond it).
pub fn foliation_check(g: &dyn Fn(f64, &Vector3<f64>) -> f64, t: f64, reach: f64) -> Result<FoliationCheck> {
    if !(t > 0.0 && reach > 0.0) {
        return Err(Error::Invalid("need t > 0 and a positive reach".into()));
    }
    let n = 24;
    let tol = 1e-13;
    let slices = quadrature::integrate(
        |s| quadrature::integrate(|r| r * r * sphere_average(g, s, r, n), 0.0, reach, tol).integral,
        0.0,
        t,
        tol,
    )
    .integral;
    let cones = quadrature::integrate(
        |u| {
            let lo = u.abs();
            let hi = 2.0 * t - u;
            if hi <= lo {
                return 0.0;
            }
            let inner = quadrature::integrate(
                |ub| {
                    let (s, r) = (0.5 * (u + ub), 0.5 * (ub - u));
                    r * r / SQRT_2 * sphere_average(g, s, r, n)
                },
                lo,
                hi,
                tol,
            )
            .integral;
            inner / SQRT_2
        },
        -reach,
        t,
        tol,
    )
    .integral;
    let scale = slices.abs().max(cones.abs());
    let rel = if scale == 0.0 { 0.0 } else { (slices - cones).abs() / scale };
    Ok(FoliationCheck { slices, cones, relative_difference: rel })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegralBound {
    pub integral: f64,
    /// `(1 + t^{b-1}) / (1 + t^{a+b-m})`.
    pub shape: f64,
    pub ratio: f64,
}

/// `int_0^inf r^{m-1} / (tau_+^a tau_-^b) dr` against its bound shape.
pub fn integral_bound_check(a: f64, b: f64, m: f64, t: f64) -> Result<IntegralBound> {
    if a + b <= m {
        return Err(Error::Invalid(format!("integral diverges for a + b = {} <= m = {m}", a + b)));
    }
    if b == 1.0 {
        return Err(Error::Invalid("the bound is stated for b != 1".into()));
    }
    if !(t >= 0.0 && m >= 1.0) {
        return Err(Error::Invalid("need t >= 0 and m >= 1".into()));
    }
    let f = |r: f64| r.powf(m - 1.0) / (tau(t + r).powf(a) * tau(t - r).powf(b));
    let shape = (1.0 + t.powf(b - 1.0)) / (1.0 + t.powf(a + b - m));
    let tol = 1e-13 * shape;
    let knee = 2.0 * t + 2.0;
    let mut integral = quadrature::integrate(f, 0.0, t.max(1e-12), tol).integral;
    integral += quadrature::integrate(f, t.max(1e-12), knee, tol).integral;
    // tail r = knee / y
    integral += quadrature::integrate(|y| if y <= 0.0 { 0.0 } else { f(knee / y) * knee / (y * y) }, 0.0, 1.0, tol).integral;
    Ok(IntegralBound { integral, shape, ratio: integral / shape })
}

/// Calibration/validation constant protocol: the best constant on the
/// calibration set, the largest ratio on the validation set, and their
/// relative difference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stability {
    pub calibration: f64,
    pub validation: f64,
    pub relative: f64,
}

pub fn stability(calibration: &[f64], validation: &[f64]) -> Result<Stability> {
    if calibration.is_empty() || validation.is_empty() {
        return Err(Error::Insufficient("empty calibration or validation set".into()));
    }
    let c = calibration.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let v = validation.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(Stability { calibration: c, validation: v, relative: (v - c) / c })
}

/// Samples `(t_k, q_k)` for log-log fitting against `log(offset + t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecaySeries {
    pub t: Vec<f64>,
    pub q: Vec<f64>,
    pub offset: f64,
}

impl DecaySeries {
    pub fn new() -> Self {
        Self { t: Vec::new(), q: Vec::new(), offset: 1.0 }
    }

    pub fn push(&mut self, t: f64, q: f64) {
        self.t.push(t);
        self.q.push(q);
    }

    pub fn window(&self, lo: f64, hi: f64) -> DecaySeries {
        let mut out = DecaySeries { offset: self.offset, ..DecaySeries::new() };
        for (t, q) in self.t.iter().zip(&self.q) {
            if (lo..=hi).contains(t) {
                out.push(*t, *q);
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

impl Default for DecaySeries {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit in log space.
    pub residual: f64,
}

/// Least-squares slope of `log q` against `log(offset + t)`.
pub fn decay_slope(s: &DecaySeries) -> Result<SlopeFit> {
    if s.len() < 5 {
        return Err(Error::Insufficient(format!("need at least 5 samples, have {}", s.len())));
    }
    if let Some(q) = s.q.iter().find(|q| !(**q > 0.0 && q.is_finite())) {
        return Err(Error::Invalid(format!("decay samples must be positive, found {q}")));
    }
    let xs: Vec<f64> = s.t.iter().map(|t| (s.offset + t).ln()).collect();
    let ys: Vec<f64> = s.q.iter().map(|q| q.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Insufficient("all sample times coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let stderr = if n > 2.0 { (ssr / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok(SlopeFit { slope, stderr, intercept, residual: (ssr / n).sqrt() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NullComponent {
    Alpha,
    AlphaBar,
    Rho,
    Sigma,
}

impl NullComponent {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "alpha" => Ok(Self::Alpha),
            "alphabar" | "alpha_bar" => Ok(Self::AlphaBar),
            "rho" => Ok(Self::Rho),
            "sigma" => Ok(Self::Sigma),
            _ => Err(Error::Invalid(format!("unknown null component {s}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Alpha => "alpha",
            Self::AlphaBar => "alphabar",
            Self::Rho => "rho",
            Self::Sigma => "sigma",
        }
    }

    pub fn magnitude(self, d: &NullDecomposition) -> f64 {
        match self {
            Self::Alpha => d.alpha_norm(),
            Self::AlphaBar => d.alpha_bar_norm(),
            Self::Rho => d.rho.abs(),
            Self::Sigma => d.sigma.abs(),
        }
    }
}

/// A probe ray: the outgoing null ray `x = (t - u) n` when `u` is set, the
/// origin otherwise (the null frame of `n` is used there).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub u: Option<f64>,
    pub direction: Vector3<f64>,
}

impl Ray {
    pub fn point(&self, t: f64) -> Result<Vector3<f64>> {
        let n = self.direction.try_normalize(0.0).ok_or(Error::Invalid("ray direction is zero".into()))?;
        Ok(match self.u {
            Some(u) => n * (t - u).max(0.0),
            None => Vector3::zeros(),
        })
    }

    fn frame(&self, x: &Vector3<f64>) -> Result<SphericalFrame> {
        if x.norm() > 0.0 {
            spherical_frame(x)
        } else {
            spherical_frame(&self.direction)
        }
    }
}

/// `|component|` of the snapshot on the ray at the snapshot's time.
pub fn probe(nodes: &NodeField, ray: &Ray, component: NullComponent) -> Result<f64> {
    let x = ray.point(nodes.t)?;
    let lat = nodes.lattice;
    let reach = lat.l - lat.h;
    if x.iter().any(|c| c.abs() > reach) {
        return Err(Error::OutOfBounds(format!("ray point {x:?} left the grid at t = {}", nodes.t)));
    }
    let f = nodes.interpolate(&x)?;
    Ok(component.magnitude(&null_decompose_in(&f, &ray.frame(&x)?)))
}

/// Series of `|component|` along a ray from a sequence of snapshots.
pub fn field_decay_probe(snapshots: &[NodeField], ray: &Ray, component: NullComponent) -> Result<DecaySeries> {
    let mut s = DecaySeries::new();
    for n in snapshots {
        s.push(n.t, probe(n, ray, component)?);
    }
    Ok(s)
}

/// The growth envelope of `|Phi|` against `log^2(1 + tau_+)`: the running
/// supremum of the ratio taken at the end of the calibration window and at
/// the end of the run.
pub fn log2_envelope(samples: &[(f64, f64, f64)], t_split: f64) -> Result<Stability> {
    let ratio = |(_, r, p): &(f64, f64, f64)| p / (1.0 + tau(*r)).ln().powi(2);
    let mut sup_cal: f64 = 0.0;
    let mut sup_all: f64 = 0.0;
    for s in samples {
        let q = ratio(s);
        if s.0 <= t_split {
            sup_cal = sup_cal.max(q);
        }
        sup_all = sup_all.max(q);
    }
    if sup_cal == 0.0 {
        return Err(Error::Insufficient("no nonzero samples in the calibration window".into()));
    }
    Ok(Stability { calibration: sup_cal, validation: sup_all, relative: (sup_all - sup_cal) / sup_cal })
}
