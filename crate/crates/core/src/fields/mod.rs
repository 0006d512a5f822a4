//! Electromagnetic fields: the pure-charge field and its source, analytic
//! test solutions, pointwise residuals of the Maxwell-type identities, the
//! pure-charge/chargeless split, and the staggered-grid solver in [`yee`].

pub mod yee;

use nalgebra::{Matrix4, Vector3, Vector4};
use num_dual::{DualNum, HyperDual64};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{energy_momentum, eta, hodge_dual, spherical_frame, TwoForm};
use crate::operators::FieldKernel;

/// Smooth cutoff with `chi = 1` on `s <= -2` and `chi = 0` on `s >= -1`,
/// joined by the quintic smoothstep (first and second derivatives vanish at
/// both ends).
#[derive(Debug, Clone, Copy, Default)]
pub struct CutoffChi;

impl CutoffChi {
    pub fn value(s: f64) -> f64 {
        if s <= -2.0 {
            1.0
        } else if s >= -1.0 {
            0.0
        } else {
            let x = s + 2.0;
            1.0 - x * x * x * (10.0 - 15.0 * x + 6.0 * x * x)
        }
    }

    pub fn d1(s: f64) -> f64 {
        if s <= -2.0 || s >= -1.0 {
            0.0
        } else {
            let x = s + 2.0;
            -30.0 * x * x * (1.0 - x) * (1.0 - x)
        }
    }

    pub fn d2(s: f64) -> f64 {
        if s <= -2.0 || s >= -1.0 {
            0.0
        } else {
            let x = s + 2.0;
            -60.0 * x * (1.0 - x) * (1.0 - 2.0 * x)
        }
    }
}

/// A 4-vector valued source `J_nu(t, x)` with lower indices.
pub trait CurrentKernel: Sync {
    fn current(&self, t: f64, x: &Vector3<f64>) -> Vector4<f64>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroCurrent;

impl CurrentKernel for ZeroCurrent {
    fn current(&self, _t: f64, _x: &Vector3<f64>) -> Vector4<f64> {
        Vector4::zeros()
    }
}

/// `Fbar = chi(t - r) (Q / 4 pi r^2)(x_i / r) dt ^ dx^i`: a radial electric
/// field carrying the charge `Q` outside the cone `t - r = -1`.
#[derive(Debug, Clone, Copy)]
pub struct PureChargeField {
    pub q: f64,
}

impl PureChargeField {
    fn coef(&self) -> f64 {
        self.q / (4.0 * PI)
    }
}

pub fn pure_charge_field(q: f64, t: f64, x: &Vector3<f64>) -> Result<TwoForm> {
    let r = x.norm();
    if r == 0.0 {
        return Err(Error::AtOrigin("pure-charge field"));
    }
    let c = q / (4.0 * PI) * CutoffChi::value(t - r) / r.powi(3);
    Ok(TwoForm { e: x * c, b: Vector3::zeros() })
}

/// Lower-index source `Jbar_0 = (Q/4 pi r^2) chi'(t - r)`,
/// `Jbar_i = -(Q/4 pi r^2)(x_i/r) chi'(t - r)`.
pub fn pure_charge_source(q: f64, t: f64, x: &Vector3<f64>) -> Result<Vector4<f64>> {
    let r = x.norm();
    if r == 0.0 {
        return Err(Error::AtOrigin("pure-charge source"));
    }
    let c = q / (4.0 * PI) * CutoffChi::d1(t - r) / (r * r);
    Ok(Vector4::new(c, -c * x[0] / r, -c * x[1] / r, -c * x[2] / r))
}

impl FieldKernel for PureChargeField {
    fn field(&self, t: f64, x: &Vector3<f64>) -> TwoForm {
        pure_charge_field(self.q, t, x).unwrap_or_default()
    }

    fn partials(&self, t: f64, x: &Vector3<f64>) -> [TwoForm; 4] {
        let r = x.norm();
        if r == 0.0 {
            return [TwoForm::zero(); 4];
        }
        let c = self.coef();
        let (chi, dchi) = (CutoffChi::value(t - r), CutoffChi::d1(t - r));
        let mut out = [TwoForm::zero(); 4];
        out[0].e = x * (c * dchi / r.powi(3));
        for j in 0..3 {
            let mut e = Vector3::zeros();
            for i in 0..3 {
                let delta = if i == j { 1.0 } else { 0.0 };
                e[i] = c * (-dchi * x[j] * x[i] / r.powi(4) + chi * (delta / r.powi(3) - 3.0 * x[i] * x[j] / r.powi(5)));
            }
            out[1 + j].e = e;
        }
        out
    }
}

impl CurrentKernel for PureChargeField {
    fn current(&self, t: f64, x: &Vector3<f64>) -> Vector4<f64> {
        pure_charge_source(self.q, t, x).unwrap_or_else(|_| Vector4::zeros())
    }
}

/// Vacuum plane wave `E = a e cos(k (t - n.x) + phase)`, `B = n x E`.
#[derive(Debug, Clone, Copy)]
pub struct PlaneWave {
    pub amplitude: f64,
    pub direction: Vector3<f64>,
    pub polarization: Vector3<f64>,
    pub wavenumber: f64,
    pub phase: f64,
}

impl PlaneWave {
    /// The wave `E = (0, cos(t - x1), 0)`, `B = (0, 0, cos(t - x1))`.
    pub fn standard() -> Self {
        Self {
            amplitude: 1.0,
            direction: Vector3::x(),
            polarization: Vector3::y(),
            wavenumber: 1.0,
            phase: 0.0,
        }
    }

    fn arg(&self, t: f64, x: &Vector3<f64>) -> f64 {
        self.wavenumber * (t - self.direction.dot(x)) + self.phase
    }
}

impl FieldKernel for PlaneWave {
    fn field(&self, t: f64, x: &Vector3<f64>) -> TwoForm {
        let e = self.polarization * (self.amplitude * self.arg(t, x).cos());
        TwoForm { e, b: self.direction.cross(&e) }
    }

    fn partials(&self, t: f64, x: &Vector3<f64>) -> [TwoForm; 4] {
        let s = -self.amplitude * self.wavenumber * self.arg(t, x).sin();
        let e_t = self.polarization * s;
        let base = TwoForm { e: e_t, b: self.direction.cross(&e_t) };
        [base, base * -self.direction[0], base * -self.direction[1], base * -self.direction[2]]
    }
}

impl CurrentKernel for PlaneWave {
    fn current(&self, _t: f64, _x: &Vector3<f64>) -> Vector4<f64> {
        Vector4::zeros()
    }
}

/// `F = dA` for `A_mu = sum a_mu sin(k . X + phase)` with arbitrary
/// (not necessarily null) covectors `k`. The matching current
/// `J_nu = grad^mu F_{mu nu}` is exact, so the pair solves the inhomogeneous
/// Maxwell system.
#[derive(Debug, Clone)]
pub struct PotentialWaves {
    pub modes: Vec<(Vector4<f64>, Vector4<f64>, f64)>,
}

impl PotentialWaves {
    fn theta(k: &Vector4<f64>, phase: f64, t: f64, x: &Vector3<f64>) -> f64 {
        k[0] * t + k[1] * x[0] + k[2] * x[1] + k[3] * x[2] + phase
    }
}

impl FieldKernel for PotentialWaves {
    fn field(&self, t: f64, x: &Vector3<f64>) -> TwoForm {
        let mut m = Matrix4::zeros();
        for (k, a, p) in &self.modes {
            m += (k * a.transpose() - a * k.transpose()) * Self::theta(k, *p, t, x).cos();
        }
        TwoForm::from_matrix(&m)
    }

    fn partials(&self, t: f64, x: &Vector3<f64>) -> [TwoForm; 4] {
        let mut out = [Matrix4::zeros(); 4];
        for (k, a, p) in &self.modes {
            let base = (k * a.transpose() - a * k.transpose()) * (-Self::theta(k, *p, t, x).sin());
            for (l, o) in out.iter_mut().enumerate() {
                *o += base * k[l];
            }
        }
        out.map(|m| TwoForm::from_matrix(&m))
    }
}

impl CurrentKernel for PotentialWaves {
    fn current(&self, t: f64, x: &Vector3<f64>) -> Vector4<f64> {
        let g = eta();
        let mut j = Vector4::zeros();
        for (k, a, p) in &self.modes {
            let kk = (k.transpose() * g * k)[(0, 0)];
            let ka = (k.transpose() * g * a)[(0, 0)];
            j -= (a * kk - k * ka) * Self::theta(k, *p, t, x).sin();
        }
        j
    }
}

/// Compactly supported vacuum solution built from a spherical wave
/// `psi = (f(t - R) - f(t + R)) / R` about `center`, with vector potential
/// `A = curl(psi e_3)`: `E = -d_t A`, `B = curl A`. The profile `f` is a
/// polynomial bump of half-width `width` centred at `shell`.
#[derive(Debug, Clone, Copy)]
pub struct SphericalPulse {
    pub amplitude: f64,
    pub center: Vector3<f64>,
    pub shell: f64,
    pub width: f64,
}

impl SphericalPulse {
    fn profile<D: DualNum<f64> + Copy>(&self, s: D) -> D {
        let z = (s - self.shell) / self.width;
        if z.re().abs() >= 1.0 {
            return D::zero();
        }
        let q = D::one() - z * z;
        q.powi(4) * self.amplitude
    }

    fn psi<D: DualNum<f64> + Copy>(&self, t: D, x: [D; 3]) -> D {
        let d = [x[0] - self.center[0], x[1] - self.center[1], x[2] - self.center[2]];
        let rr = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        (self.profile(t - rr) - self.profile(t + rr)) / rr
    }

    /// Mixed second derivative of `psi` in coordinates `a`, `b` (0 = t).
    fn d2(&self, t: f64, x: &Vector3<f64>, a: usize, b: usize) -> f64 {
        let mut c: [HyperDual64; 4] = [
            HyperDual64::from_re(t),
            HyperDual64::from_re(x[0]),
            HyperDual64::from_re(x[1]),
            HyperDual64::from_re(x[2]),
        ];
        c[a].eps1 = 1.0;
        c[b].eps2 = 1.0;
        self.psi(c[0], [c[1], c[2], c[3]]).eps1eps2
    }

    /// Vector potential `A` and `d_t A` at a point.
    pub fn potential(&self, t: f64, x: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
        if (x - self.center).norm() == 0.0 {
            return (Vector3::zeros(), Vector3::zeros());
        }
        let p = |a, b| self.d2(t, x, a, b);
        let d1 = |a: usize| {
            let mut c = [HyperDual64::from_re(t), HyperDual64::from_re(x[0]), HyperDual64::from_re(x[1]), HyperDual64::from_re(x[2])];
            c[a].eps1 = 1.0;
            self.psi(c[0], [c[1], c[2], c[3]]).eps1
        };
        (Vector3::new(d1(2), -d1(1), 0.0), Vector3::new(p(0, 2), -p(0, 1), 0.0))
    }

    /// Support radius about the centre at time `t`.
    pub fn support_radius(&self, t: f64) -> f64 {
        self.shell + self.width + t
    }
}

impl FieldKernel for SphericalPulse {
    fn field(&self, t: f64, x: &Vector3<f64>) -> TwoForm {
        if (x - self.center).norm() == 0.0 {
            return TwoForm::zero();
        }
        let p = |a, b| self.d2(t, x, a, b);
        // A = (d_y psi, -d_x psi, 0)
        let e = Vector3::new(-p(0, 2), p(0, 1), 0.0);
        let b = Vector3::new(p(1, 3), p(2, 3), -p(1, 1) - p(2, 2));
        TwoForm { e, b }
    }
}

/// `grad^mu F_{mu nu} - J_nu` and `grad^mu (*F)_{mu nu}` at a point.
pub fn maxwell_residual<F: FieldKernel + ?Sized, J: CurrentKernel + ?Sized>(
    f: &F,
    j: &J,
    t: f64,
    x: &Vector3<f64>,
) -> (Vector4<f64>, Vector4<f64>) {
    let dp = f.partials(t, x);
    let div = |parts: &[Matrix4<f64>; 4]| -> Vector4<f64> {
        let mut out = Vector4::zeros();
        for nu in 0..4 {
            for mu in 0..4 {
                let g = if mu == 0 { -1.0 } else { 1.0 };
                out[nu] += g * parts[mu][(mu, nu)];
            }
        }
        out
    };
    let m = [dp[0].matrix(), dp[1].matrix(), dp[2].matrix(), dp[3].matrix()];
    let md = dp.map(|d| hodge_dual(&d).matrix());
    (div(&m) - j.current(t, x), div(&md))
}

/// Residuals of the null-frame Maxwell equations, evaluated by central
/// differences of step `h` along `Lbar`, the frame directions and Cartesian
/// axes (for the sphere divergence and curl of `alphabar`).
///
/// The `rho` equation is checked in the form
/// `-grad_Lbar rho + (2/r) rho + div_S alphabar = J_Lbar`, which is the
/// consistent sign for `rho = F(L, Lbar)/2` and `grad^mu F_{mu nu} = J_nu`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NullMaxwellResidual {
    pub rho: f64,
    pub sigma: f64,
    pub alpha: [f64; 2],
}

impl NullMaxwellResidual {
    pub fn max_abs(&self) -> f64 {
        self.rho.abs().max(self.sigma.abs()).max(self.alpha[0].abs()).max(self.alpha[1].abs())
    }
}

pub fn null_maxwell_residual<F: FieldKernel + ?Sized, J: CurrentKernel + ?Sized>(
    f: &F,
    j: &J,
    t: f64,
    x: &Vector3<f64>,
    h: f64,
) -> Result<NullMaxwellResidual> {
    let r = x.norm();
    if r == 0.0 {
        return Err(Error::AtOrigin("null Maxwell residual"));
    }
    if r <= 2.0 * h {
        return Err(Error::Invalid("finite-difference stencil reaches the origin".into()));
    }
    let fr = spherical_frame(x)?;
    let om = fr.omega;
    // Frame-free evaluations at nearby points.
    let rho_at = |t: f64, y: &Vector3<f64>| -> f64 {
        let w = y.normalize();
        let fy = f.field(t, y);
        -fy.e.dot(&w)
    };
    let sigma_at = |t: f64, y: &Vector3<f64>| -> f64 { -f.field(t, y).b.dot(&y.normalize()) };
    // Tangential vectors: alpha in the fixed frame at x (constant along Lbar),
    // alphabar as a frame-free tangential vector field.
    let alpha_vec = |t: f64, y: &Vector3<f64>| -> Vector3<f64> {
        let w = y.normalize();
        let fy = f.field(t, y);
        let a = -fy.e + w.cross(&fy.b) * -1.0;
        a - w * a.dot(&w)
    };
    let abar_vec = |t: f64, y: &Vector3<f64>| -> Vector3<f64> {
        let w = y.normalize();
        let fy = f.field(t, y);
        let a = -fy.e + w.cross(&fy.b);
        a - w * a.dot(&w)
    };
    let lbar = |g: &dyn Fn(f64, &Vector3<f64>) -> f64| (g(t + h, &(x - om * h)) - g(t - h, &(x + om * h))) / (2.0 * h);
    let along = |g: &dyn Fn(f64, &Vector3<f64>) -> f64, d: &Vector3<f64>| (g(t, &(x + d * h)) - g(t, &(x - d * h))) / (2.0 * h);
    let mut jac = Matrix4::zeros();
    for k in 0..3 {
        let mut d = Vector3::zeros();
        d[k] = h;
        let diff = (abar_vec(t, &(x + d)) - abar_vec(t, &(x - d))) / (2.0 * h);
        for i in 0..3 {
            jac[(i, k)] = diff[i];
        }
    }
    let div_s = jac[(0, 0)] + jac[(1, 1)] + jac[(2, 2)];
    let curl = Vector3::new(jac[(2, 1)] - jac[(1, 2)], jac[(0, 2)] - jac[(2, 0)], jac[(1, 0)] - jac[(0, 1)]);
    let curl_s = curl.dot(&om);
    let jv = j.current(t, x);
    let jsp = Vector3::new(jv[1], jv[2], jv[3]);
    let j_lbar = jv[0] - om.dot(&jsp);
    let rho = rho_at(t, x);
    let sigma = sigma_at(t, x);
    let res_rho = -lbar(&rho_at) + 2.0 / r * rho + div_s - j_lbar;
    let res_sigma = lbar(&sigma_at) - 2.0 / r * sigma + curl_s;
    let mut res_alpha = [0.0; 2];
    for (a, slot) in res_alpha.iter_mut().enumerate() {
        let ea = fr.e(a);
        let comp = |tt: f64, y: &Vector3<f64>| alpha_vec(tt, y).dot(&ea);
        let l = lbar(&comp);
        let drho = along(&rho_at, &ea);
        // eps_{BA} grad_{e_B} sigma: A = 1 gives -e_2, A = 2 gives +e_1
        let ds = if a == 0 { -along(&sigma_at, &fr.e2) } else { along(&sigma_at, &fr.e1) };
        *slot = l - comp(t, x) / r + drho + ds - jsp.dot(&ea);
    }
    Ok(NullMaxwellResidual { rho: res_rho, sigma: res_sigma, alpha: res_alpha })
}

/// `grad^mu T_{mu nu} - F_{nu lambda} J^lambda` at a point.
pub fn divergence_t_residual<F: FieldKernel + ?Sized, J: CurrentKernel + ?Sized>(
    f: &F,
    j: &J,
    t: f64,
    x: &Vector3<f64>,
) -> Vector4<f64> {
    let g = eta();
    let fv = f.field(t, x);
    let m = fv.matrix();
    let dp = f.partials(t, x);
    let mut div = Vector4::zeros();
    for (mu, d) in dp.iter().enumerate() {
        let dm = d.matrix();
        let dinv = 4.0 * (fv.b.dot(&d.b) - fv.e.dot(&d.e));
        let dt = dm * g * m.transpose() + m * g * dm.transpose() - g * (0.25 * dinv);
        let s = if mu == 0 { -1.0 } else { 1.0 };
        for nu in 0..4 {
            div[nu] += s * dt[(mu, nu)];
        }
    }
    let jup = g * j.current(t, x);
    div - m * jup
}

/// Energy-momentum tensor of a field kernel at a point.
pub fn energy_momentum_at<F: FieldKernel + ?Sized>(f: &F, t: f64, x: &Vector3<f64>) -> Matrix4<f64> {
    energy_momentum(&f.field(t, x))
}

/// Chargeless part `Ftilde = F - Fbar` of a field kernel.
pub struct Chargeless<K> {
    pub inner: K,
    pub q: f64,
}

impl<K: FieldKernel> FieldKernel for Chargeless<K> {
    fn field(&self, t: f64, x: &Vector3<f64>) -> TwoForm {
        self.inner.field(t, x) - PureChargeField { q: self.q }.field(t, x)
    }
    fn partials(&self, t: f64, x: &Vector3<f64>) -> [TwoForm; 4] {
        let a = self.inner.partials(t, x);
        let b = PureChargeField { q: self.q }.partials(t, x);
        [a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]]
    }
}

/// The split `F = Ftilde + Fbar` together with the charge used.
pub struct ChargeSplit<K> {
    pub q: f64,
    pub pure: PureChargeField,
    pub chargeless: Chargeless<K>,
}

pub fn split<K: FieldKernel>(f: K, q: f64) -> ChargeSplit<K> {
    ChargeSplit { q, pure: PureChargeField { q }, chargeless: Chargeless { inner: f, q } }
}

/// `int_{|x - c| = R} E . n dS` by Gauss-Legendre in `cos(theta)` and the
/// trapezoid rule in `phi`.
pub fn sphere_flux(e: &dyn Fn(&Vector3<f64>) -> Vector3<f64>, center: &Vector3<f64>, radius: f64, n_theta: usize) -> f64 {
    let gl = gauss_quad::GaussLegendre::new(n_theta.try_into().expect("n_theta > 0"));
    let n_phi = 2 * n_theta;
    let mut total = 0.0;
    for (mu, w) in gl.iter() {
        let s = (1.0 - mu * mu).sqrt();
        for k in 0..n_phi {
            let phi = 2.0 * PI * (k as f64 + 0.5) / n_phi as f64;
            let n = Vector3::new(s * phi.cos(), s * phi.sin(), *mu);
            total += w * e(&(center + n * radius)).dot(&n);
        }
    }
    total * radius * radius * 2.0 * PI / n_phi as f64
}

/// Charge seen by a field kernel on the sphere of radius `radius` at time `t`.
pub fn field_charge<K: FieldKernel + ?Sized>(f: &K, t: f64, radius: f64) -> f64 {
    sphere_flux(&|y| f.field(t, y).e, &Vector3::zeros(), radius, 24)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi_plateaus() {
        assert_eq!(CutoffChi::value(-2.0), 1.0);
        assert_eq!(CutoffChi::value(-1.0), 0.0);
        assert_eq!(CutoffChi::value(-5.0), 1.0);
        assert_eq!(CutoffChi::value(0.5), 0.0);
        assert!((CutoffChi::value(-1.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn pure_charge_magnitude() {
        let f = pure_charge_field(4.0 * PI, 0.0, &Vector3::new(2.0, 0.0, 0.0)).unwrap();
        assert!((f.e.norm() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn pure_charge_flux() {
        let q = 1.7;
        let got = field_charge(&PureChargeField { q }, 0.0, 5.0);
        assert!((got - q).abs() < 1e-12);
    }
}
