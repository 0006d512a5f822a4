//! Staggered (Yee) discretisation of the Maxwell field on the cube
//! `[-L, L]^3` with `n` cells per axis.
//!
//! Node `(i, j, k)` sits at `(-L + i h, -L + j h, -L + k h)`. `E_c` lives on
//! edges offset by `h/2` along axis `c`, `B_c` on faces offset by `h/2` along
//! the two other axes, and current density shares the `E` layout. All arrays
//! have `(n + 1)^3` entries; entries beyond a component's lattice are unused.
//!
//! `E` and `B` are stored at the same time level: a step is a half step of
//! `B`, a full step of `E` and another half step of `B`. Tangential `E` on the
//! boundary faces of the cube is held at its current value unless reset with
//! [`YeeGrid::set_boundary_e`]; every face of `B` is updated, so the discrete
//! divergence of `B` is preserved to rounding.

use std::io::{Read, Write};

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::TwoForm;
use crate::operators::{lie_from_parts, FieldId, FieldKernel};

/// Offsets (in cells) of the `E` and `J` lattices.
pub const E_OFFSETS: [[f64; 3]; 3] = [[0.5, 0.0, 0.0], [0.0, 0.5, 0.0], [0.0, 0.0, 0.5]];
/// Offsets (in cells) of the `B` lattices.
pub const B_OFFSETS: [[f64; 3]; 3] = [[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]];

/// Cube geometry shared by the grid containers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lattice {
    pub n: usize,
    pub l: f64,
    pub h: f64,
}

impl Lattice {
    pub fn new(n: usize, l: f64) -> Result<Self> {
        if n < 4 {
            return Err(Error::Invalid(format!("grid needs at least 4 cells per axis, got {n}")));
        }
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::Invalid(format!("half-width must be positive, got {l}")));
        }
        Ok(Self { n, l, h: 2.0 * l / n as f64 })
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * (self.n + 1) + j) * (self.n + 1) + k
    }

    pub fn len(&self) -> usize {
        (self.n + 1).pow(3)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coord(&self, i: f64) -> f64 {
        -self.l + i * self.h
    }

    pub fn position(&self, idx: [usize; 3], offset: [f64; 3]) -> Vector3<f64> {
        Vector3::new(
            self.coord(idx[0] as f64 + offset[0]),
            self.coord(idx[1] as f64 + offset[1]),
            self.coord(idx[2] as f64 + offset[2]),
        )
    }

    /// Lattice coordinates `(x + L) / h`.
    pub fn to_lattice(&self, x: &Vector3<f64>) -> [f64; 3] {
        [(x[0] + self.l) / self.h, (x[1] + self.l) / self.h, (x[2] + self.l) / self.h]
    }

    /// Index ranges `[lo, hi)` of the staggered lattice with offset `off`.
    fn extent(&self, off: [f64; 3]) -> [usize; 3] {
        off.map(|o| if o > 0.0 { self.n } else { self.n + 1 })
    }

    /// Visits every index of the component lattice with offset `off`.
    pub fn for_each(&self, off: [f64; 3], mut f: impl FnMut([usize; 3])) {
        let e = self.extent(off);
        for i in 0..e[0] {
            for j in 0..e[1] {
                for k in 0..e[2] {
                    f([i, j, k]);
                }
            }
        }
    }

    /// Trilinear interpolation of `arr` on the lattice with offset `off`.
    pub fn interpolate(&self, arr: &[f64], off: [f64; 3], x: &Vector3<f64>) -> Result<f64> {
        let p = self.to_lattice(x);
        let e = self.extent(off);
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let s = p[a] - off[a];
            let f = s.floor();
            if !(f >= 0.0 && (f as usize) + 1 < e[a]) {
                return Err(Error::OutOfBounds(format!("point {x:?} outside the grid")));
            }
            base[a] = f as usize;
            frac[a] = s - f;
        }
        let mut acc = 0.0;
        for (di, wi) in [(0, 1.0 - frac[0]), (1, frac[0])] {
            for (dj, wj) in [(0, 1.0 - frac[1]), (1, frac[1])] {
                for (dk, wk) in [(0, 1.0 - frac[2]), (1, frac[2])] {
                    acc += wi * wj * wk * arr[self.idx(base[0] + di, base[1] + dj, base[2] + dk)];
                }
            }
        }
        Ok(acc)
    }
}

/// Current density on the `E` lattices.
#[derive(Debug, Clone)]
pub struct CurrentGrid {
    pub lattice: Lattice,
    pub j: [Vec<f64>; 3],
}

impl CurrentGrid {
    pub fn zeros(lattice: Lattice) -> Self {
        let z = vec![0.0; lattice.len()];
        Self { lattice, j: [z.clone(), z.clone(), z] }
    }

    pub fn clear(&mut self) {
        for c in &mut self.j {
            c.fill(0.0);
        }
    }
}

/// Electric and magnetic field on the staggered grid at time `t`.
#[derive(Debug, Clone)]
pub struct YeeGrid {
    pub lattice: Lattice,
    pub t: f64,
    pub e: [Vec<f64>; 3],
    pub b: [Vec<f64>; 3],
}

impl YeeGrid {
    pub fn zeros(lattice: Lattice, t: f64) -> Self {
        let z = vec![0.0; lattice.len()];
        Self {
            lattice,
            t,
            e: [z.clone(), z.clone(), z.clone()],
            b: [z.clone(), z.clone(), z],
        }
    }

    /// Samples a field kernel on every component lattice.
    pub fn from_kernel<K: FieldKernel + ?Sized>(lattice: Lattice, k: &K, t: f64) -> Self {
        let mut g = Self::zeros(lattice, t);
        for c in 0..3 {
            lattice.for_each(E_OFFSETS[c], |p| {
                g.e[c][lattice.idx(p[0], p[1], p[2])] = k.field(t, &lattice.position(p, E_OFFSETS[c])).e[c];
            });
            lattice.for_each(B_OFFSETS[c], |p| {
                g.b[c][lattice.idx(p[0], p[1], p[2])] = k.field(t, &lattice.position(p, B_OFFSETS[c])).b[c];
            });
        }
        g
    }

    /// Samples a vector potential `A` on the `E` lattices and sets
    /// `E = -d_t A` there and `B` to the discrete curl of `A`, so that the
    /// discrete `div B` vanishes to rounding. `potential` returns
    /// `(A, d_t A)`.
    pub fn from_potential(lattice: Lattice, potential: &dyn Fn(f64, &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>), t: f64) -> Self {
        let mut g = Self::zeros(lattice, t);
        let mut a = Self::zeros(lattice, t);
        for c in 0..3 {
            lattice.for_each(E_OFFSETS[c], |p| {
                let (pot, rate) = potential(t, &lattice.position(p, E_OFFSETS[c]));
                let i = lattice.idx(p[0], p[1], p[2]);
                a.e[c][i] = pot[c];
                g.e[c][i] = -rate[c];
            });
        }
        // B -= dt curl A with dt = -1
        a.advance_b(-1.0);
        g.b = a.b;
        g
    }

    pub fn h(&self) -> f64 {
        self.lattice.h
    }

    /// Largest stable time step `h / sqrt(3)`.
    pub fn cfl_limit(&self) -> f64 {
        self.lattice.h / 3f64.sqrt()
    }

    fn check_dt(&self, dt: f64) -> Result<()> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Invalid(format!("time step must be positive, got {dt}")));
        }
        if dt > self.cfl_limit() * (1.0 + 1e-12) {
            return Err(Error::Invalid(format!(
                "time step {dt} exceeds the stability limit {}",
                self.cfl_limit()
            )));
        }
        Ok(())
    }

    /// `B -= dt curl E` on every face.
    fn advance_b(&mut self, dt: f64) {
        let lat = self.lattice;
        let n = lat.n;
        let c = dt / lat.h;
        let [ex, ey, ez] = &self.e;
        let [bx, by, bz] = &mut self.b;
        for i in 0..=n {
            for j in 0..=n {
                for k in 0..=n {
                    let p = lat.idx(i, j, k);
                    if j < n && k < n {
                        bx[p] -= c * ((ez[lat.idx(i, j + 1, k)] - ez[p]) - (ey[lat.idx(i, j, k + 1)] - ey[p]));
                    }
                    if i < n && k < n {
                        by[p] -= c * ((ex[lat.idx(i, j, k + 1)] - ex[p]) - (ez[lat.idx(i + 1, j, k)] - ez[p]));
                    }
                    if i < n && j < n {
                        bz[p] -= c * ((ey[lat.idx(i + 1, j, k)] - ey[p]) - (ex[lat.idx(i, j + 1, k)] - ex[p]));
                    }
                }
            }
        }
    }

    /// `E += dt (curl B - J)` on interior edges.
    fn advance_e(&mut self, j: &CurrentGrid, dt: f64) {
        let lat = self.lattice;
        let n = lat.n;
        let c = dt / lat.h;
        let [bx, by, bz] = &self.b;
        let [ex, ey, ez] = &mut self.e;
        let [jx, jy, jz] = &j.j;
        for i in 0..=n {
            for jj in 0..=n {
                for k in 0..=n {
                    let p = lat.idx(i, jj, k);
                    let int = |a: usize| a >= 1 && a < n;
                    if i < n && int(jj) && int(k) {
                        ex[p] += c * ((bz[p] - bz[lat.idx(i, jj - 1, k)]) - (by[p] - by[lat.idx(i, jj, k - 1)])) - dt * jx[p];
                    }
                    if jj < n && int(i) && int(k) {
                        ey[p] += c * ((bx[p] - bx[lat.idx(i, jj, k - 1)]) - (bz[p] - bz[lat.idx(i - 1, jj, k)])) - dt * jy[p];
                    }
                    if k < n && int(i) && int(jj) {
                        ez[p] += c * ((by[p] - by[lat.idx(i - 1, jj, k)]) - (bx[p] - bx[lat.idx(i, jj - 1, k)])) - dt * jz[p];
                    }
                }
            }
        }
    }

    /// One time step with the current `j` taken at the half step.
    pub fn step(&mut self, j: &CurrentGrid, dt: f64) -> Result<()> {
        self.step_driven(j, dt, None)
    }

    /// As [`YeeGrid::step`], with tangential boundary `E` prescribed by
    /// `boundary` at the new time before the closing half step of `B`.
    pub fn step_driven(&mut self, j: &CurrentGrid, dt: f64, boundary: Option<&dyn Fn(f64, &Vector3<f64>) -> Vector3<f64>>) -> Result<()> {
        self.check_dt(dt)?;
        if j.lattice != self.lattice {
            return Err(Error::Invalid("current grid does not match the field grid".into()));
        }
        self.advance_b(0.5 * dt);
        self.advance_e(j, dt);
        self.t += dt;
        if let Some(f) = boundary {
            self.set_boundary_e(f);
        }
        self.advance_b(0.5 * dt);
        if !self.is_finite() {
            return Err(Error::NonFinite("Yee field after step"));
        }
        Ok(())
    }

    /// Vacuum step.
    pub fn step_vacuum(&mut self, dt: f64) -> Result<()> {
        let j = CurrentGrid::zeros(self.lattice);
        self.step(&j, dt)
    }

    pub fn is_finite(&self) -> bool {
        self.e.iter().chain(self.b.iter()).all(|c| c.iter().all(|v| v.is_finite()))
    }

    /// Overwrites the tangential `E` edges on the boundary faces.
    pub fn set_boundary_e(&mut self, f: &dyn Fn(f64, &Vector3<f64>) -> Vector3<f64>) {
        let lat = self.lattice;
        let n = lat.n;
        let t = self.t;
        for c in 0..3 {
            let off = E_OFFSETS[c];
            let mut updates = Vec::new();
            lat.for_each(off, |p| {
                let on_boundary = (0..3).any(|a| a != c && (p[a] == 0 || p[a] == n));
                if on_boundary {
                    updates.push((lat.idx(p[0], p[1], p[2]), f(t, &lat.position(p, off))[c]));
                }
            });
            for (i, v) in updates {
                self.e[c][i] = v;
            }
        }
    }

    /// `1/2 int (|E|^2 + |B|^2)`, each component summed over its own lattice.
    pub fn energy(&self) -> f64 {
        let lat = self.lattice;
        let mut s = 0.0;
        for c in 0..3 {
            lat.for_each(E_OFFSETS[c], |p| s += self.e[c][lat.idx(p[0], p[1], p[2])].powi(2));
            lat.for_each(B_OFFSETS[c], |p| s += self.b[c][lat.idx(p[0], p[1], p[2])].powi(2));
        }
        0.5 * s * lat.h.powi(3)
    }

    /// Largest `|div B|` over cells.
    pub fn max_div_b(&self) -> f64 {
        let lat = self.lattice;
        let n = lat.n;
        let [bx, by, bz] = &self.b;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let p = lat.idx(i, j, k);
                    let d = (bx[lat.idx(i + 1, j, k)] - bx[p]) + (by[lat.idx(i, j + 1, k)] - by[p]) + (bz[lat.idx(i, j, k + 1)] - bz[p]);
                    worst = worst.max((d / lat.h).abs());
                }
            }
        }
        worst
    }

    /// `div E` at interior node `(i, j, k)`.
    pub fn div_e(&self, i: usize, j: usize, k: usize) -> f64 {
        let lat = self.lattice;
        let [ex, ey, ez] = &self.e;
        let p = lat.idx(i, j, k);
        ((ex[p] - ex[lat.idx(i - 1, j, k)]) + (ey[p] - ey[lat.idx(i, j - 1, k)]) + (ez[p] - ez[lat.idx(i, j, k - 1)])) / lat.h
    }

    /// Largest `|div E - rho|` over interior nodes, `rho` given on nodes.
    pub fn gauss_residual(&self, rho: &[f64]) -> f64 {
        let n = self.lattice.n;
        let mut worst: f64 = 0.0;
        for i in 1..n {
            for j in 1..n {
                for k in 1..n {
                    worst = worst.max((self.div_e(i, j, k) - rho[self.lattice.idx(i, j, k)]).abs());
                }
            }
        }
        worst
    }

    /// Field at an arbitrary point by trilinear interpolation of each
    /// component on its own lattice.
    pub fn gather(&self, x: &Vector3<f64>) -> Result<TwoForm> {
        let lat = &self.lattice;
        let mut f = TwoForm::zero();
        for c in 0..3 {
            f.e[c] = lat.interpolate(&self.e[c], E_OFFSETS[c], x)?;
            f.b[c] = lat.interpolate(&self.b[c], B_OFFSETS[c], x)?;
        }
        Ok(f)
    }

    /// Replaces `E` by the discrete electrostatic field of the node charge
    /// density `rho`, so that `div E = rho` holds on interior nodes.
    pub fn set_electrostatic(&mut self, rho: &[f64], tol: f64) -> Result<usize> {
        let (phi, iters) = solve_poisson(&self.lattice, rho, tol)?;
        let lat = self.lattice;
        for c in 0..3 {
            let mut d = [0usize; 3];
            d[c] = 1;
            let mut vals = Vec::new();
            lat.for_each(E_OFFSETS[c], |p| {
                let a = lat.idx(p[0], p[1], p[2]);
                let b = lat.idx(p[0] + d[0], p[1] + d[1], p[2] + d[2]);
                vals.push((a, -(phi[b] - phi[a]) / lat.h));
            });
            for (a, v) in vals {
                self.e[c][a] = v;
            }
        }
        Ok(iters)
    }

    /// Averages all components onto the nodes.
    pub fn node_field(&self) -> NodeField {
        let lat = self.lattice;
        let n = lat.n;
        let mut data = vec![TwoForm::zero(); lat.len()];
        let cl = |a: isize| a.clamp(0, n as isize - 1) as usize;
        for i in 0..=n {
            for j in 0..=n {
                for k in 0..=n {
                    let (ii, jj, kk) = (i as isize, j as isize, k as isize);
                    let mut f = TwoForm::zero();
                    f.e[0] = 0.5 * (self.e[0][lat.idx(cl(ii - 1), j, k)] + self.e[0][lat.idx(cl(ii), j, k)]);
                    f.e[1] = 0.5 * (self.e[1][lat.idx(i, cl(jj - 1), k)] + self.e[1][lat.idx(i, cl(jj), k)]);
                    f.e[2] = 0.5 * (self.e[2][lat.idx(i, j, cl(kk - 1))] + self.e[2][lat.idx(i, j, cl(kk))]);
                    let avg4 = |arr: &Vec<f64>, pts: [(usize, usize, usize); 4]| pts.iter().map(|&(a, b, c)| arr[lat.idx(a, b, c)]).sum::<f64>() * 0.25;
                    let (j0, j1, k0, k1, i0, i1) = (cl(jj - 1), cl(jj), cl(kk - 1), cl(kk), cl(ii - 1), cl(ii));
                    f.b[0] = avg4(&self.b[0], [(i, j0, k0), (i, j1, k0), (i, j0, k1), (i, j1, k1)]);
                    f.b[1] = avg4(&self.b[1], [(i0, j, k0), (i1, j, k0), (i0, j, k1), (i1, j, k1)]);
                    f.b[2] = avg4(&self.b[2], [(i0, j0, k), (i1, j0, k), (i0, j1, k), (i1, j1, k)]);
                    data[lat.idx(i, j, k)] = f;
                }
            }
        }
        NodeField { lattice: lat, t: self.t, data }
    }

    /// Writes a snapshot: a one-line text header followed by the six field
    /// arrays as little-endian `f64`.
    pub fn write_snapshot(&self, w: &mut dyn Write) -> Result<()> {
        writeln!(w, "yee n={} l={:e} t={:e}", self.lattice.n, self.lattice.l, self.t)?;
        for c in self.e.iter().chain(self.b.iter()) {
            for v in c {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_snapshot(r: &mut dyn Read) -> Result<Self> {
        let header = read_line(r)?;
        let mut n = None;
        let mut l = None;
        let mut t = None;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("yee") {
            return Err(Error::Invalid("not a Yee snapshot".into()));
        }
        for p in parts {
            let (k, v) = p.split_once('=').ok_or_else(|| Error::Invalid(format!("bad header field {p}")))?;
            match k {
                "n" => n = v.parse::<usize>().ok(),
                "l" => l = v.parse::<f64>().ok(),
                "t" => t = v.parse::<f64>().ok(),
                _ => {}
            }
        }
        let (n, l, t) = match (n, l, t) {
            (Some(n), Some(l), Some(t)) => (n, l, t),
            _ => return Err(Error::Invalid("incomplete snapshot header".into())),
        };
        let lattice = Lattice::new(n, l)?;
        let mut g = YeeGrid::zeros(lattice, t);
        let mut buf = [0u8; 8];
        for c in g.e.iter_mut().chain(g.b.iter_mut()) {
            for v in c.iter_mut() {
                r.read_exact(&mut buf)?;
                *v = f64::from_le_bytes(buf);
            }
        }
        Ok(g)
    }
}

fn read_line(r: &mut dyn Read) -> Result<String> {
    let mut out = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        r.read_exact(&mut byte)?;
        if byte[0] == b'\n' {
            break;
        }
        out.push(byte[0]);
        if out.len() > 4096 {
            return Err(Error::Invalid("snapshot header too long".into()));
        }
    }
    String::from_utf8(out).map_err(|e| Error::Invalid(e.to_string()))
}

/// Solves `-Lap_h phi = rho` on interior nodes with `phi = 0` on the
/// boundary by conjugate gradients. Returns the potential and the iteration
/// count.
pub fn solve_poisson(lat: &Lattice, rho: &[f64], tol: f64) -> Result<(Vec<f64>, usize)> {
    let n = lat.n;
    let h2 = lat.h * lat.h;
    let apply = |p: &[f64], out: &mut [f64]| {
        for i in 1..n {
            for j in 1..n {
                for k in 1..n {
                    let c = lat.idx(i, j, k);
                    let s = p[lat.idx(i - 1, j, k)] + p[lat.idx(i + 1, j, k)] + p[lat.idx(i, j - 1, k)] + p[lat.idx(i, j + 1, k)] + p[lat.idx(i, j, k - 1)] + p[lat.idx(i, j, k + 1)];
                    out[c] = (6.0 * p[c] - s) / h2;
                }
            }
        }
    };
    let interior = |f: &mut dyn FnMut(usize)| {
        for i in 1..n {
            for j in 1..n {
                for k in 1..n {
                    f(lat.idx(i, j, k));
                }
            }
        }
    };
    let len = lat.len();
    let mut x = vec![0.0; len];
    let mut r = vec![0.0; len];
    interior(&mut |c| r[c] = rho[c]);
    let mut p = r.clone();
    let mut ap = vec![0.0; len];
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let norm0 = dot(&r, &r).sqrt();
    if norm0 == 0.0 {
        return Ok((x, 0));
    }
    let mut rr = dot(&r, &r);
    let max_iter = 20 * n * n;
    for it in 0..max_iter {
        apply(&p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for c in 0..len {
            x[c] += alpha * p[c];
            r[c] -= alpha * ap[c];
        }
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= tol * norm0 {
            return Ok((x, it + 1));
        }
        let beta = rr_new / rr;
        for c in 0..len {
            p[c] = r[c] + beta * p[c];
        }
        rr = rr_new;
    }
    Err(Error::Insufficient(format!("Poisson solve did not reach tolerance {tol} in {max_iter} iterations")))
}

/// Field values averaged to nodes. Entries on the outermost nodes use
/// one-sided averages; [`NodeField::interior`] gives the trusted range.
#[derive(Debug, Clone)]
pub struct NodeField {
    pub lattice: Lattice,
    pub t: f64,
    pub data: Vec<TwoForm>,
}

impl NodeField {
    pub fn from_kernel<K: FieldKernel + ?Sized>(lattice: Lattice, k: &K, t: f64) -> Self {
        let mut data = vec![TwoForm::zero(); lattice.len()];
        lattice.for_each([0.0; 3], |p| data[lattice.idx(p[0], p[1], p[2])] = k.field(t, &lattice.position(p, [0.0; 3])));
        Self { lattice, t, data }
    }

    pub fn at(&self, i: usize, j: usize, k: usize) -> TwoForm {
        self.data[self.lattice.idx(i, j, k)]
    }

    pub fn position(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        self.lattice.position([i, j, k], [0.0; 3])
    }

    /// Trusted node index range `[1, n - 1]`.
    pub fn interior(&self) -> std::ops::RangeInclusive<usize> {
        1..=self.lattice.n - 1
    }

    pub fn interpolate(&self, x: &Vector3<f64>) -> Result<TwoForm> {
        let lat = &self.lattice;
        let p = lat.to_lattice(x);
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let f = p[a].floor();
            if !(f >= 0.0 && (f as usize) < lat.n) {
                return Err(Error::OutOfBounds(format!("point {x:?} outside the node lattice")));
            }
            base[a] = f as usize;
            frac[a] = p[a] - f;
        }
        let mut acc = TwoForm::zero();
        for (di, wi) in [(0, 1.0 - frac[0]), (1, frac[0])] {
            for (dj, wj) in [(0, 1.0 - frac[1]), (1, frac[1])] {
                for (dk, wk) in [(0, 1.0 - frac[2]), (1, frac[2])] {
                    acc = acc + self.at(base[0] + di, base[1] + dj, base[2] + dk) * (wi * wj * wk);
                }
            }
        }
        Ok(acc)
    }

    pub fn map(&self, f: impl Fn(&Vector3<f64>, &TwoForm) -> TwoForm) -> NodeField {
        let lat = self.lattice;
        let mut data = self.data.clone();
        lat.for_each([0.0; 3], |p| {
            let i = lat.idx(p[0], p[1], p[2]);
            data[i] = f(&lat.position(p, [0.0; 3]), &self.data[i]);
        });
        NodeField { lattice: lat, t: self.t, data }
    }

    /// Chargeless part: subtracts the pure-charge field of charge `q`.
    pub fn chargeless(&self, q: f64) -> NodeField {
        let t = self.t;
        self.map(|x, f| *f - super::PureChargeField { q }.field(t, x))
    }
}

/// Time levels used for `d_t` in grid Lie derivatives.
pub struct TimeStencil<'a> {
    pub prev: &'a NodeField,
    pub cur: &'a NodeField,
    /// With a later level the time derivative is centred; without one it is
    /// the backward difference `(cur - prev) / dt`.
    pub next: Option<&'a NodeField>,
}

/// `L_Z F` on nodes of the current level, with central differences in space
/// and [`TimeStencil`] in time. Valid on nodes `2..=n-2`; the rest are zero.
pub fn lie_derivative_grid(z: FieldId, s: &TimeStencil) -> Result<NodeField> {
    let cur = s.cur;
    let lat = cur.lattice;
    if s.prev.lattice != lat || s.next.is_some_and(|n| n.lattice != lat) {
        return Err(Error::Invalid("time levels live on different grids".into()));
    }
    let dt_back = cur.t - s.prev.t;
    if !(dt_back > 0.0) {
        return Err(Error::Invalid("time levels must increase".into()));
    }
    let n = lat.n;
    let mut data = vec![TwoForm::zero(); lat.len()];
    for i in 2..=n - 2 {
        for j in 2..=n - 2 {
            for k in 2..=n - 2 {
                let p = lat.idx(i, j, k);
                let dtf = match s.next {
                    Some(nx) => (nx.data[p] - s.prev.data[p]) * (1.0 / (nx.t - s.prev.t)),
                    None => (cur.data[p] - s.prev.data[p]) * (1.0 / dt_back),
                };
                let c2 = 0.5 / lat.h;
                let dx = (cur.at(i + 1, j, k) - cur.at(i - 1, j, k)) * c2;
                let dy = (cur.at(i, j + 1, k) - cur.at(i, j - 1, k)) * c2;
                let dz = (cur.at(i, j, k + 1) - cur.at(i, j, k - 1)) * c2;
                let x = lat.position([i, j, k], [0.0; 3]);
                let c = z.coefficients(cur.t, &x);
                data[p] = lie_from_parts(z, &c, &cur.data[p], &[dtf, dx, dy, dz]);
            }
        }
    }
    Ok(NodeField { lattice: lat, t: cur.t, data })
}
