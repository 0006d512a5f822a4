//! Particle side of the system: relativistic characteristics, exact free
//! transport, the macro-particle ensemble, transport of the `Phi`
//! coefficients, charge-conserving deposition and the coupled
//! particle-in-cell step.

use std::io::{Read, Write};

use nalgebra::Vector3;
use num_dual::{Dual64, DualNum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::yee::{lie_derivative_grid, CurrentGrid, Lattice, NodeField, TimeStencil, YeeGrid};
use crate::geometry::TwoForm;
use crate::operators::{
    force_density, lie_derivative, phi_source_from_parts, v0_of, FieldId, FieldKernel, GenericKernel, Phase7,
    ScalarKernel, WeightId,
};

/// A macro-particle. `v` is the spatial momentum; `v^0 = sqrt(1 + |v|^2)`
/// is always derived from it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub x: Vector3<f64>,
    pub v: Vector3<f64>,
    pub w: f64,
    /// Position at spawn, used for cone-crossing bookkeeping.
    pub x_init: Vector3<f64>,
}

impl Particle {
    pub fn new(x: Vector3<f64>, v: Vector3<f64>, w: f64) -> Self {
        Self { x, v, w, x_init: x }
    }

    pub fn v0(&self) -> f64 {
        v0_of(&self.v)
    }

    pub fn speed(&self) -> Vector3<f64> {
        self.v / self.v0()
    }
}

/// `Phi^k_Z` for a fixed list of generators, stored per particle as
/// `values[(p * G + g) * 3 + k]`. `rates` keeps the last evaluated
/// `dPhi/dt` for the trapezoid rule.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiTable {
    pub fields: Vec<FieldId>,
    pub values: Vec<f64>,
    pub rates: Vec<f64>,
}

impl PhiTable {
    pub fn new(fields: Vec<FieldId>, n: usize) -> Self {
        let len = n * fields.len() * 3;
        Self { fields, values: vec![0.0; len], rates: vec![0.0; len] }
    }

    pub fn get(&self, p: usize, g: usize) -> Vector3<f64> {
        let o = (p * self.fields.len() + g) * 3;
        Vector3::new(self.values[o], self.values[o + 1], self.values[o + 2])
    }

    pub fn stride(&self) -> usize {
        self.fields.len() * 3
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub particles: Vec<Particle>,
    pub phi: PhiTable,
    pub seed: u64,
    pub t: f64,
}

impl Ensemble {
    pub fn new(particles: Vec<Particle>, phi_fields: Vec<FieldId>, seed: u64) -> Self {
        let n = particles.len();
        Self { particles, phi: PhiTable::new(phi_fields, n), seed, t: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// `Q = sum w`.
    pub fn total_charge(&self) -> f64 {
        self.particles.iter().map(|p| p.w).sum()
    }

    /// `sum |w|`, the discrete `L^1` norm of the density.
    pub fn l1_norm(&self) -> f64 {
        self.particles.iter().map(|p| p.w.abs()).sum()
    }

    /// `sum w (v^0 - 1)`.
    pub fn kinetic_energy(&self) -> f64 {
        self.particles.iter().map(|p| p.w * (p.v0() - 1.0)).sum()
    }

    /// Snapshot: one text header line, then per particle
    /// `x[3] v[3] w x_init[3]` and the `Phi` values as little-endian `f64`.
    pub fn write_snapshot(&self, w: &mut dyn Write) -> Result<()> {
        let names: Vec<&str> = self.phi.fields.iter().map(|f| f.name()).collect();
        writeln!(w, "ensemble n={} t={:e} seed={} phi={}", self.len(), self.t, self.seed, names.join(","))?;
        for p in &self.particles {
            for v in p.x.iter().chain(p.v.iter()).chain(std::iter::once(&p.w)).chain(p.x_init.iter()) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        for v in &self.phi.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_snapshot(r: &mut dyn Read) -> Result<Self> {
        let mut header = Vec::new();
        let mut byte = [0u8; 1];
        loop {
            r.read_exact(&mut byte)?;
            if byte[0] == b'\n' {
                break;
            }
            header.push(byte[0]);
        }
        let header = String::from_utf8(header).map_err(|e| Error::Invalid(e.to_string()))?;
        let mut it = header.split_whitespace();
        if it.next() != Some("ensemble") {
            return Err(Error::Invalid("not an ensemble snapshot".into()));
        }
        let (mut n, mut t, mut seed, mut fields) = (None, None, None, Vec::new());
        for kv in it {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Invalid(format!("bad header field {kv}")))?;
            match k {
                "n" => n = v.parse::<usize>().ok(),
                "t" => t = v.parse::<f64>().ok(),
                "seed" => seed = v.parse::<u64>().ok(),
                "phi" => {
                    for name in v.split(',').filter(|s| !s.is_empty()) {
                        fields.push(FieldId::parse(name)?);
                    }
                }
                _ => {}
            }
        }
        let (n, t, seed) = match (n, t, seed) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => return Err(Error::Invalid("incomplete ensemble header".into())),
        };
        let mut buf = [0u8; 8];
        let mut next = || -> Result<f64> {
            r.read_exact(&mut buf)?;
            Ok(f64::from_le_bytes(buf))
        };
        let mut particles = Vec::with_capacity(n);
        for _ in 0..n {
            let mut a = [0.0; 10];
            for v in a.iter_mut() {
                *v = next()?;
            }
            particles.push(Particle {
                x: Vector3::new(a[0], a[1], a[2]),
                v: Vector3::new(a[3], a[4], a[5]),
                w: a[6],
                x_init: Vector3::new(a[7], a[8], a[9]),
            });
        }
        let mut e = Ensemble::new(particles, fields, seed);
        for v in e.phi.values.iter_mut() {
            *v = next()?;
        }
        e.t = t;
        Ok(e)
    }
}

/// Anisotropic Gaussian `f_0(x, v) = eps N(x; c, sx) N(v; m, sv)` with
/// normalised factors, so that `int int f_0 = eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianData {
    pub amplitude: f64,
    pub center: [f64; 3],
    pub sigma_x: [f64; 3],
    pub mean_v: [f64; 3],
    pub sigma_v: [f64; 3],
}

impl GaussianData {
    pub fn isotropic(amplitude: f64, sigma_x: f64, sigma_v: f64) -> Self {
        Self {
            amplitude,
            center: [0.0; 3],
            sigma_x: [sigma_x; 3],
            mean_v: [0.0; 3],
            sigma_v: [sigma_v; 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.amplitude.is_finite()
            && self.amplitude >= 0.0
            && self.sigma_x.iter().chain(self.sigma_v.iter()).all(|s| s.is_finite() && *s > 0.0)
            && self.center.iter().chain(self.mean_v.iter()).all(|c| c.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("initial density is not normalisable: {self:?}")))
        }
    }

    /// Total mass `int int f_0`.
    pub fn mass(&self) -> f64 {
        self.amplitude
    }

    fn norm(&self) -> f64 {
        let p: f64 = self.sigma_x.iter().chain(self.sigma_v.iter()).product();
        self.amplitude / ((2.0 * std::f64::consts::PI).powi(3) * p)
    }

    pub fn eval_generic<D: DualNum<f64> + Copy>(&self, x: [D; 3], v: [D; 3]) -> D {
        let mut q = D::zero();
        for a in 0..3 {
            let zx = (x[a] - self.center[a]) / self.sigma_x[a];
            let zv = (v[a] - self.mean_v[a]) / self.sigma_v[a];
            q += zx * zx + zv * zv;
        }
        (q * -0.5).exp() * self.norm()
    }

    pub fn density(&self, x: &Vector3<f64>, v: &Vector3<f64>) -> f64 {
        self.eval_generic([x[0], x[1], x[2]], [v[0], v[1], v[2]])
    }

    /// `int f_0(x, v) dx`, the velocity marginal.
    pub fn velocity_marginal(&self, v: &Vector3<f64>) -> f64 {
        let mut q = 0.0;
        for a in 0..3 {
            q += ((v[a] - self.mean_v[a]) / self.sigma_v[a]).powi(2);
        }
        self.amplitude * (-0.5 * q).exp() / ((2.0 * std::f64::consts::PI).powf(1.5) * self.sigma_v.iter().product::<f64>())
    }
}

/// `f(t, x, v) = f_0(x - t v/v^0, v)`.
pub fn free_solution(f0: &GaussianData, t: f64, x: &Vector3<f64>, v: &Vector3<f64>) -> f64 {
    f0.density(&(x - v * (t / v0_of(v))), v)
}

/// Free solution as a phase-space kernel with exact derivatives.
#[derive(Debug, Clone, Copy)]
pub struct FreeSolution(pub GaussianData);

impl GenericKernel for FreeSolution {
    fn eval<D: DualNum<f64> + Copy>(&self, y: &[D; 7]) -> D {
        let v = [y[4], y[5], y[6]];
        let v0 = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + 1.0).sqrt();
        let s = y[0] / v0;
        self.0.eval_generic([y[1] - v[0] * s, y[2] - v[1] * s, y[3] - v[2] * s], v)
    }
}

impl ScalarKernel for FreeSolution {
    fn value(&self, y: &Phase7) -> f64 {
        let a: [f64; 7] = (*y).into();
        self.eval(&a)
    }

    fn gradient(&self, y: &Phase7) -> Phase7 {
        let mut g = Phase7::zeros();
        for i in 0..7 {
            let mut d: [Dual64; 7] = std::array::from_fn(|j| Dual64::from_re(y[j]));
            d[i].eps = 1.0;
            g[i] = self.eval(&d).eps;
        }
        g
    }
}

/// Equal-weight sample of `f_0 / |f_0|`; deterministic for a fixed seed.
pub fn sample_initial(f0: &GaussianData, n: usize, seed: u64, phi_fields: Vec<FieldId>) -> Result<Ensemble> {
    f0.validate()?;
    if n == 0 {
        return Err(Error::Invalid("ensemble size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = f0.mass() / n as f64;
    let mut particles = Vec::with_capacity(n);
    for _ in 0..n {
        let mut x = Vector3::zeros();
        let mut v = Vector3::zeros();
        for a in 0..3 {
            let z: f64 = StandardNormal.sample(&mut rng);
            x[a] = f0.center[a] + f0.sigma_x[a] * z;
        }
        for a in 0..3 {
            let z: f64 = StandardNormal.sample(&mut rng);
            v[a] = f0.mean_v[a] + f0.sigma_v[a] * z;
        }
        particles.push(Particle::new(x, v, w));
    }
    Ok(Ensemble::new(particles, phi_fields, seed))
}

/// `dv/dt` for momentum `v` in the field `f`: `E + v x B / v^0`.
pub fn lorentz_force(f: &TwoForm, v: &Vector3<f64>) -> Vector3<f64> {
    force_density(f, v) / v0_of(v)
}

/// Relativistic Boris step (unit charge and mass): half electric kick,
/// magnetic rotation, half kick, then drift with the new velocity.
pub fn boris_push(p: &mut Particle, f: &TwoForm, dt: f64) -> Result<()> {
    if !f.is_finite() {
        return Err(Error::NonFinite("field sample in push"));
    }
    let h = 0.5 * dt;
    let um = p.v + f.e * h;
    let g = v0_of(&um);
    let t = f.b * (h / g);
    let s = t * (2.0 / (1.0 + t.norm_squared()));
    let up = um + um.cross(&t);
    let uplus = um + up.cross(&s);
    p.v = uplus + f.e * h;
    p.x += p.v * (dt / p.v0());
    Ok(())
}

/// Classical fourth-order Runge-Kutta step for `dx/dt = v/v^0`,
/// `dv/dt = E + v x B/v^0` with the field sampled by `field`.
pub fn rk4_push(p: &mut Particle, field: &dyn Fn(f64, &Vector3<f64>) -> Result<TwoForm>, t: f64, dt: f64) -> Result<()> {
    let rhs = |t: f64, x: &Vector3<f64>, v: &Vector3<f64>| -> Result<(Vector3<f64>, Vector3<f64>)> {
        let f = field(t, x)?;
        if !f.is_finite() {
            return Err(Error::NonFinite("field sample in push"));
        }
        Ok((v / v0_of(v), lorentz_force(&f, v)))
    };
    let (x, v) = (p.x, p.v);
    let (k1x, k1v) = rhs(t, &x, &v)?;
    let (k2x, k2v) = rhs(t + 0.5 * dt, &(x + k1x * (0.5 * dt)), &(v + k1v * (0.5 * dt)))?;
    let (k3x, k3v) = rhs(t + 0.5 * dt, &(x + k2x * (0.5 * dt)), &(v + k2v * (0.5 * dt)))?;
    let (k4x, k4v) = rhs(t + dt, &(x + k3x * dt), &(v + k3v * dt))?;
    p.x = x + (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (dt / 6.0);
    p.v = v + (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (dt / 6.0);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pusher {
    Boris,
    Rk4,
}

/// One push with either integrator. Boris samples the field once at the
/// current position and time.
pub fn lorentz_push(p: &mut Particle, pusher: Pusher, field: &dyn Fn(f64, &Vector3<f64>) -> Result<TwoForm>, t: f64, dt: f64) -> Result<()> {
    match pusher {
        Pusher::Boris => {
            let f = field(t, &p.x)?;
            boris_push(p, &f, dt)
        }
        Pusher::Rk4 => rk4_push(p, field, t, dt),
    }
}

/// [`rk4_push`] with `F = 0`, skipping the field samples. All four stages
/// see the same velocity, so the update is the same sum the general step
/// forms.
#[inline]
pub fn rk4_free(p: &mut Particle, dt: f64) {
    let k = p.v / v0_of(&p.v);
    p.x += (k + k * 2.0 + k * 2.0 + k) * (dt / 6.0);
}

/// Advances every particle `steps` free RK4 steps in parallel.
pub fn free_transport(e: &mut Ensemble, dt: f64, steps: usize) {
    e.particles.par_iter_mut().for_each(|p| {
        for _ in 0..steps {
            rk4_free(p, dt);
        }
    });
    e.t += dt * steps as f64;
}

/// Cloud-in-cell weights of the four nodes `base..base+3` at lattice
/// coordinate `s`.
#[inline]
fn shape(s: f64, base: isize) -> [f64; 4] {
    std::array::from_fn(|m| (1.0 - (s - (base + m as isize) as f64).abs()).max(0.0))
}

/// Nodes in `[2, n - 2)` along every axis keep the deposition stencil and
/// the Lie-derivative stencil off the boundary.
fn check_inside(lat: &Lattice, x: &Vector3<f64>) -> Result<[f64; 3]> {
    let s = lat.to_lattice(x);
    let hi = (lat.n - 2) as f64;
    if s.iter().all(|c| c.is_finite() && *c >= 2.0 && *c < hi) {
        Ok(s)
    } else {
        Err(Error::OutOfBounds(format!("particle at {x:?} is too close to the grid boundary")))
    }
}

/// Node charge density `sum w S(x - x_node) / h^3` (cloud-in-cell).
pub fn deposit_charge(e: &Ensemble, lat: &Lattice) -> Result<Vec<f64>> {
    let mut rho = vec![0.0; lat.len()];
    let inv = 1.0 / lat.h.powi(3);
    for p in &e.particles {
        let s = check_inside(lat, &p.x)?;
        let b = s.map(|c| c.floor() as isize - 1);
        let [sx, sy, sz] = [shape(s[0], b[0]), shape(s[1], b[1]), shape(s[2], b[2])];
        for a in 0..4 {
            for bb in 0..4 {
                for c in 0..4 {
                    let i = lat.idx((b[0] + a as isize) as usize, (b[1] + bb as isize) as usize, (b[2] + c as isize) as usize);
                    rho[i] += p.w * sx[a] * sy[bb] * sz[c] * inv;
                }
            }
        }
    }
    Ok(rho)
}

/// Number of fixed deposition chunks; partial sums are combined in chunk
/// order, so results do not depend on the thread count.
pub const DEPOSIT_CHUNKS: usize = 8;

fn esirkepov_one(lat: &Lattice, j: &mut [Vec<f64>; 3], s0: [f64; 3], s1: [f64; 3], w: f64, dt: f64) {
    let b = s0.map(|c| c.floor() as isize - 1);
    let mut w0 = [[0.0; 4]; 3];
    let mut ds = [[0.0; 4]; 3];
    for a in 0..3 {
        w0[a] = shape(s0[a], b[a]);
        let w1 = shape(s1[a], b[a]);
        for m in 0..4 {
            ds[a][m] = w1[m] - w0[a][m];
        }
    }
    let coef = -w / (lat.h * lat.h * dt);
    let node = |a: usize, m: usize| (b[a] + m as isize) as usize;
    // axis c carries the current; (p, q) are the two transverse axes
    for c in 0..3 {
        let (p, q) = ((c + 1) % 3, (c + 2) % 3);
        for mp in 0..4 {
            for mq in 0..4 {
                let trans = w0[p][mp] * w0[q][mq]
                    + 0.5 * ds[p][mp] * w0[q][mq]
                    + 0.5 * w0[p][mp] * ds[q][mq]
                    + ds[p][mp] * ds[q][mq] / 3.0;
                if trans == 0.0 {
                    continue;
                }
                let mut run = 0.0;
                for mc in 0..3 {
                    run += ds[c][mc] * trans;
                    if run == 0.0 {
                        continue;
                    }
                    let mut idx = [0usize; 3];
                    idx[c] = node(c, mc);
                    idx[p] = node(p, mp);
                    idx[q] = node(q, mq);
                    j[c][lat.idx(idx[0], idx[1], idx[2])] += coef * run;
                }
            }
        }
    }
}

/// Scratch buffers for [`deposit_current`].
pub struct DepositBuffers {
    chunks: Vec<[Vec<f64>; 3]>,
}

impl DepositBuffers {
    pub fn new(lat: &Lattice) -> Self {
        let z = vec![0.0; lat.len()];
        Self { chunks: (0..DEPOSIT_CHUNKS).map(|_| [z.clone(), z.clone(), z.clone()]).collect() }
    }
}

/// Charge-conserving current of the moves `old_x[p] -> particles[p].x` over
/// `dt` (Esirkepov's decomposition with cloud-in-cell shapes). Each move
/// must stay within one cell per axis.
pub fn deposit_current(
    e: &Ensemble,
    old_x: &[Vector3<f64>],
    dt: f64,
    out: &mut CurrentGrid,
    bufs: &mut DepositBuffers,
) -> Result<()> {
    let lat = out.lattice;
    if old_x.len() != e.len() {
        return Err(Error::Invalid("old positions do not match the ensemble".into()));
    }
    let n = e.len();
    let per = n.div_ceil(DEPOSIT_CHUNKS).max(1);
    bufs.chunks.par_iter_mut().enumerate().try_for_each(|(ci, buf)| -> Result<()> {
        for c in buf.iter_mut() {
            c.fill(0.0);
        }
        let lo = (ci * per).min(n);
        let hi = ((ci + 1) * per).min(n);
        for p in lo..hi {
            let s0 = check_inside(&lat, &old_x[p])?;
            let s1 = check_inside(&lat, &e.particles[p].x)?;
            if (0..3).any(|a| (s1[a] - s0[a]).abs() >= 1.0) {
                return Err(Error::Invalid("particle moved more than one cell in a step".into()));
            }
            esirkepov_one(&lat, buf, s0, s1, e.particles[p].w, dt);
        }
        Ok(())
    })?;
    out.clear();
    for buf in &bufs.chunks {
        for c in 0..3 {
            for (o, v) in out.j[c].iter_mut().zip(&buf[c]) {
                *o += v;
            }
        }
    }
    Ok(())
}

/// Which velocity moment [`velocity_average`] estimates:
/// `int |z|^power f dv / (v^0)^kappa`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightSpec {
    pub weight: Option<WeightId>,
    pub power: i32,
    pub kappa: i32,
}

impl WeightSpec {
    pub const PLAIN: WeightSpec = WeightSpec { weight: None, power: 0, kappa: 0 };

    pub fn factor(&self, t: f64, x: &Vector3<f64>, v: &Vector3<f64>) -> f64 {
        let z = match self.weight {
            Some(w) => crate::operators::weight(w, t, x, v).abs().powi(self.power),
            None => 1.0,
        };
        z / v0_of(v).powi(self.kappa)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityAverage {
    pub value: f64,
    pub count: usize,
    /// Set when no particle fell in the cell.
    pub empty: bool,
}

/// Binned estimate of the weighted velocity average at `center`: the
/// weighted sum over particles inside the cube of side `h` about `center`,
/// divided by `h^3`.
pub fn velocity_average(e: &Ensemble, center: &Vector3<f64>, h: f64, spec: WeightSpec) -> Result<VelocityAverage> {
    if !(h > 0.0) {
        return Err(Error::Invalid("cell size must be positive".into()));
    }
    let mut value = 0.0;
    let mut count = 0;
    for p in &e.particles {
        let d = p.x - center;
        if d.iter().all(|c| *c >= -0.5 * h && *c < 0.5 * h) {
            value += p.w * spec.factor(e.t, &p.x, &p.v);
            count += 1;
        }
    }
    Ok(VelocityAverage { value: value / h.powi(3), count, empty: count == 0 })
}

/// `dPhi^k_Z/dt` along a characteristic: the transport source over `v^0`.
pub fn phi_rate(z: FieldId, t: f64, v: &Vector3<f64>, f: &TwoForm, lz: &TwoForm) -> Vector3<f64> {
    let v0 = v0_of(v);
    Vector3::from_fn(|k, _| phi_source_from_parts(z, t, v, f, lz, k) / v0)
}

/// Trapezoid increment of `Phi_Z` over one push of an analytic field.
pub fn integrate_phi<K: FieldKernel + ?Sized>(
    z: FieldId,
    field: &K,
    before: (f64, &Vector3<f64>, &Vector3<f64>),
    after: (f64, &Vector3<f64>, &Vector3<f64>),
) -> Vector3<f64> {
    let rate = |(t, x, v): (f64, &Vector3<f64>, &Vector3<f64>)| {
        phi_rate(z, t, v, &field.field(t, x), &lie_derivative(z, field, t, x))
    };
    (rate(before) + rate(after)) * (0.5 * (after.0 - before.0))
}

/// A characteristic together with its `Phi` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Characteristic {
    pub t: f64,
    pub x: Vector3<f64>,
    pub v: Vector3<f64>,
    pub phi: Vec<Vector3<f64>>,
}

/// Advances a characteristic of `T_F` with RK4 in `t` for `steps` steps,
/// integrating `Phi_Z` for each `z` in `fields` by the trapezoid rule.
/// Returns the state after every step.
pub fn trace_characteristic<K: FieldKernel + ?Sized>(
    field: &K,
    fields: &[FieldId],
    start: (f64, Vector3<f64>, Vector3<f64>),
    dt: f64,
    steps: usize,
) -> Result<Vec<Characteristic>> {
    let mut p = Particle::new(start.1, start.2, 1.0);
    let mut t = start.0;
    let mut phi = vec![Vector3::zeros(); fields.len()];
    let mut out = Vec::with_capacity(steps + 1);
    out.push(Characteristic { t, x: p.x, v: p.v, phi: phi.clone() });
    let sample = |t: f64, x: &Vector3<f64>| Ok(field.field(t, x));
    for _ in 0..steps {
        let (x0, v0) = (p.x, p.v);
        rk4_push(&mut p, &sample, t, dt)?;
        for (g, z) in fields.iter().enumerate() {
            phi[g] += integrate_phi(*z, field, (t, &x0, &v0), (t + dt, &p.x, &p.v));
        }
        t += dt;
        out.push(Characteristic { t, x: p.x, v: p.v, phi: phi.clone() });
    }
    Ok(out)
}

/// Diagnostic integrator parametrising the characteristic by `u = t - |x|`:
/// `dt/du = v^0 / (2 v^Lbar)`, `dx/du = v / (2 v^Lbar)`,
/// `dv/du = v^0 (dv/dt) / (2 v^Lbar)` and `dPhi/du = source / (2 v^Lbar)`,
/// with `2 v^Lbar = v^0 - v . x/|x|`. RK4 from `start.u` to `u_end`.
pub fn trace_characteristic_u<K: FieldKernel + ?Sized>(
    field: &K,
    z: FieldId,
    start: (f64, Vector3<f64>, Vector3<f64>),
    u_end: f64,
    steps: usize,
) -> Result<Characteristic> {
    type State = (f64, Vector3<f64>, Vector3<f64>, Vector3<f64>);
    let rhs = |s: &State| -> Result<State> {
        let (t, x, v, _) = *s;
        let r = x.norm();
        if r == 0.0 {
            return Err(Error::AtOrigin("u-parametrised characteristic"));
        }
        let v0 = v0_of(&v);
        let two_vlbar = v0 - v.dot(&x) / r;
        let f = field.field(t, &x);
        let lz = lie_derivative(z, field, t, &x);
        let src = Vector3::from_fn(|k, _| phi_source_from_parts(z, t, &v, &f, &lz, k));
        let c = 1.0 / two_vlbar;
        Ok((v0 * c, v * c, force_density(&f, &v) * c, src * c))
    };
    let u0 = start.0 - start.1.norm();
    if steps == 0 {
        return Err(Error::Invalid("need at least one step".into()));
    }
    let du = (u_end - u0) / steps as f64;
    let mut s: State = (start.0, start.1, start.2, Vector3::zeros());
    let add = |s: &State, k: &State, h: f64| -> State { (s.0 + k.0 * h, s.1 + k.1 * h, s.2 + k.2 * h, s.3 + k.3 * h) };
    for _ in 0..steps {
        let k1 = rhs(&s)?;
        let k2 = rhs(&add(&s, &k1, 0.5 * du))?;
        let k3 = rhs(&add(&s, &k2, 0.5 * du))?;
        let k4 = rhs(&add(&s, &k3, du))?;
        s = (
            s.0 + (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0) * du / 6.0,
            s.1 + (k1.1 + k2.1 * 2.0 + k3.1 * 2.0 + k4.1) * (du / 6.0),
            s.2 + (k1.2 + k2.2 * 2.0 + k3.2 * 2.0 + k4.2) * (du / 6.0),
            s.3 + (k1.3 + k2.3 * 2.0 + k3.3 * 2.0 + k4.3) * (du / 6.0),
        );
    }
    Ok(Characteristic { t: s.0, x: s.1, v: s.2, phi: vec![s.3] })
}

/// Per-step bookkeeping of a coupled run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepInfo {
    pub t: f64,
    /// Field energy `1/2 int |E|^2 + |B|^2` at the new time.
    pub field_energy: f64,
    /// `sum w (v^0 - 1)` at the new time, averaged over the two half-step
    /// momenta.
    pub kinetic_energy: f64,
    /// `int |E . J| dx` times `dt` for this step.
    pub source_work: f64,
    pub charge: f64,
    pub max_field: f64,
}

/// State of the coupled particle-in-cell run. `E`, `B` and positions live
/// at integer times; momenta at half-integer times.
pub struct CoupledState {
    pub grid: YeeGrid,
    pub ensemble: Ensemble,
    pub current: CurrentGrid,
    /// Node-averaged field at the current time, kept for time differences
    /// in the grid Lie derivatives.
    pub nodes: NodeField,
    buffers: DepositBuffers,
    old_x: Vec<Vector3<f64>>,
    old_v0: Vec<f64>,
}

impl CoupledState {
    /// Starts a run. The momenta are taken as given at `t - dt/2`.
    pub fn new(grid: YeeGrid, mut ensemble: Ensemble) -> Result<Self> {
        let lat = grid.lattice;
        for p in &ensemble.particles {
            check_inside(&lat, &p.x)?;
        }
        ensemble.t = grid.t;
        let n = ensemble.len();
        let nodes = grid.node_field();
        Ok(Self {
            current: CurrentGrid::zeros(lat),
            buffers: DepositBuffers::new(&lat),
            nodes,
            grid,
            ensemble,
            old_x: vec![Vector3::zeros(); n],
            old_v0: vec![0.0; n],
        })
    }

    pub fn t(&self) -> f64 {
        self.grid.t
    }
}

/// One leapfrog cycle: gather at `t`, Boris push (momenta to `t + dt/2`,
/// positions to `t + dt`), charge-conserving deposit, field step, then the
/// trapezoid update of `Phi` with grid Lie derivatives (backward time
/// difference).
pub fn coupled_step(s: &mut CoupledState, dt: f64) -> Result<StepInfo> {
    let grid = &s.grid;
    let lat = grid.lattice;
    let e = &mut s.ensemble;
    e.particles
        .par_iter_mut()
        .zip(s.old_x.par_iter_mut())
        .zip(s.old_v0.par_iter_mut())
        .try_for_each(|((p, ox), ov)| -> Result<()> {
            *ox = p.x;
            *ov = p.v0();
            let f = grid.gather(&p.x)?;
            boris_push(p, &f, dt)
        })?;
    deposit_current(e, &s.old_x, dt, &mut s.current, &mut s.buffers)?;
    let e_before = s.grid.e.clone();
    s.grid.step(&s.current, dt)?;
    e.t = s.grid.t;
    // int |E . J| with E at the half step
    let mut work = 0.0;
    for c in 0..3 {
        for i in 0..lat.len() {
            work += (0.5 * (e_before[c][i] + s.grid.e[c][i]) * s.current.j[c][i]).abs();
        }
    }
    work *= lat.h.powi(3) * dt;
    let nodes = s.grid.node_field();
    if !e.phi.fields.is_empty() {
        let stride = e.phi.stride();
        let lie: Vec<NodeField> = e
            .phi
            .fields
            .iter()
            .map(|z| lie_derivative_grid(*z, &TimeStencil { prev: &s.nodes, cur: &nodes, next: None }))
            .collect::<Result<_>>()?;
        let fields = e.phi.fields.clone();
        let t1 = s.grid.t;
        e.particles
            .par_iter()
            .zip(e.phi.values.par_chunks_mut(stride))
            .zip(e.phi.rates.par_chunks_mut(stride))
            .try_for_each(|((p, vals), rates)| -> Result<()> {
                let f = nodes.interpolate(&p.x)?;
                for (g, z) in fields.iter().enumerate() {
                    let lz = lie[g].interpolate(&p.x)?;
                    let r = phi_rate(*z, t1, &p.v, &f, &lz);
                    for k in 0..3 {
                        let o = 3 * g + k;
                        vals[o] += 0.5 * dt * (rates[o] + r[k]);
                        rates[o] = r[k];
                    }
                }
                Ok(())
            })?;
    }
    s.nodes = nodes;
    let kinetic: f64 = e
        .particles
        .iter()
        .zip(&s.old_v0)
        .map(|(p, ov)| p.w * (0.5 * (p.v0() + ov) - 1.0))
        .sum();
    let max_field = s
        .grid
        .e
        .iter()
        .chain(s.grid.b.iter())
        .flat_map(|c| c.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(StepInfo {
        t: s.grid.t,
        field_energy: s.grid.energy(),
        kinetic_energy: kinetic,
        source_work: work,
        charge: e.total_charge(),
        max_field,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_flight_in_zero_field() {
        let mut p = Particle::new(Vector3::new(1.0, 2.0, 3.0), Vector3::new(0.3, -0.4, 1.2), 1.0);
        let v = p.v;
        boris_push(&mut p, &TwoForm::zero(), 0.5).unwrap();
        assert_eq!(p.v, v);
        let want = Vector3::new(1.0, 2.0, 3.0) + v * (0.5 / v0_of(&v));
        assert!((p.x - want).norm() < 1e-15);
    }

    #[test]
    fn boris_rejects_nan() {
        let mut p = Particle::new(Vector3::zeros(), Vector3::zeros(), 1.0);
        let f = TwoForm::new([f64::NAN, 0.0, 0.0], [0.0; 3]);
        assert!(boris_push(&mut p, &f, 0.1).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let f0 = GaussianData::isotropic(0.5, 1.0, 0.3);
        let a = sample_initial(&f0, 100, 7, vec![]).unwrap();
        let b = sample_initial(&f0, 100, 7, vec![]).unwrap();
        assert_eq!(a.particles, b.particles);
        assert!((a.total_charge() - 0.5).abs() < 1e-14);
        assert!(sample_initial(&GaussianData::isotropic(1.0, -1.0, 1.0), 10, 0, vec![]).is_err());
    }
}
