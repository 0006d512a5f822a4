//! Minkowski geometry: null coordinates, the spherical null frame, 2-forms,
//! Hodge duality and the electromagnetic energy-momentum tensor.
//!
//! Conventions: signature (-,+,+,+), coordinates (t, x1, x2, x3), and
//! `eps_{0123} = +1`. A 2-form is stored through its electric and magnetic
//! parts with `E^i = F_{0i}` and `B^i = -*F_{0i}`, which gives
//! `F_{23} = -B^1`, `F_{31} = -B^2`, `F_{12} = -B^3`.

use nalgebra::{Matrix4, Vector3, Vector4};
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{finite3, Error, Result};

/// Minkowski metric `diag(-1, 1, 1, 1)`.
pub fn eta() -> Matrix4<f64> {
    Matrix4::from_diagonal(&Vector4::new(-1.0, 1.0, 1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpacetimePoint {
    pub t: f64,
    pub x: Vector3<f64>,
}

impl SpacetimePoint {
    pub fn new(t: f64, x: [f64; 3]) -> Self {
        Self { t, x: Vector3::from(x) }
    }

    pub fn r(&self) -> f64 {
        self.x.norm()
    }

    /// Retarded null coordinate `t - r`.
    pub fn u(&self) -> f64 {
        self.t - self.r()
    }

    /// Advanced null coordinate `t + r`.
    pub fn ubar(&self) -> f64 {
        self.t + self.r()
    }

    pub fn omega(&self) -> Result<Vector3<f64>> {
        let r = self.r();
        if r == 0.0 {
            return Err(Error::AtOrigin("omega"));
        }
        Ok(self.x / r)
    }

    /// Contravariant position `x^mu = (t, x)`.
    pub fn four(&self) -> Vector4<f64> {
        Vector4::new(self.t, self.x[0], self.x[1], self.x[2])
    }

    fn check(&self) -> Result<()> {
        finite3(&[self.t, self.x[0], self.x[1], self.x[2]], "spacetime point")
    }
}

/// `tau_+ = sqrt(1 + ubar^2)` and `tau_- = sqrt(1 + u^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauWeights {
    pub plus: f64,
    pub minus: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullCoords {
    pub u: f64,
    pub ubar: f64,
    pub tau: TauWeights,
}

pub fn tau_weights(p: &SpacetimePoint) -> TauWeights {
    TauWeights {
        plus: (1.0 + p.ubar().powi(2)).sqrt(),
        minus: (1.0 + p.u().powi(2)).sqrt(),
    }
}

pub fn null_coords(p: &SpacetimePoint) -> Result<NullCoords> {
    p.check()?;
    Ok(NullCoords { u: p.u(), ubar: p.ubar(), tau: tau_weights(p) })
}

/// A point of the mass shell, stored through its spatial part `v^i`.
/// The time component is `v^0 = sqrt(1 + |v|^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassShellVelocity {
    pub v: Vector3<f64>,
}

impl MassShellVelocity {
    pub fn new(v: [f64; 3]) -> Self {
        Self { v: Vector3::from(v) }
    }

    pub fn v0(&self) -> f64 {
        (1.0 + self.v.norm_squared()).sqrt()
    }

    /// Contravariant four-velocity `(v^0, v)`.
    pub fn four(&self) -> Vector4<f64> {
        Vector4::new(self.v0(), self.v[0], self.v[1], self.v[2])
    }

    /// Coordinate velocity `v / v^0`.
    pub fn speed(&self) -> Vector3<f64> {
        self.v / self.v0()
    }
}

/// Orthonormal sphere frame `(e_1, e_2)` at a point, with `e_1 x e_2 = omega`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalFrame {
    pub omega: Vector3<f64>,
    pub e1: Vector3<f64>,
    pub e2: Vector3<f64>,
}

impl SphericalFrame {
    pub fn e(&self, a: usize) -> Vector3<f64> {
        if a == 0 {
            self.e1
        } else {
            self.e2
        }
    }

    pub fn l(&self) -> Vector4<f64> {
        Vector4::new(1.0, self.omega[0], self.omega[1], self.omega[2])
    }

    pub fn lbar(&self) -> Vector4<f64> {
        Vector4::new(1.0, -self.omega[0], -self.omega[1], -self.omega[2])
    }

    /// Spatial vector `e_A` as a four-vector with zero time component.
    pub fn e4(&self, a: usize) -> Vector4<f64> {
        let e = self.e(a);
        Vector4::new(0.0, e[0], e[1], e[2])
    }
}

/// Builds the sphere frame by Gram-Schmidt against the coordinate axis on
/// which `omega` has the smallest absolute component (lowest index on ties),
/// then `e_2 = omega x e_1`. Along the positive x1-axis this gives
/// `e_1 = (0,1,0)`, `e_2 = (0,0,1)`.
pub fn spherical_frame(x: &Vector3<f64>) -> Result<SphericalFrame> {
    finite3(x.as_slice(), "frame position")?;
    let r = x.norm();
    if r == 0.0 {
        return Err(Error::AtOrigin("spherical frame"));
    }
    let omega = x / r;
    let mut k = 0;
    for i in 1..3 {
        if omega[i].abs() < omega[k].abs() {
            k = i;
        }
    }
    let mut a = Vector3::zeros();
    a[k] = 1.0;
    let e1 = (a - omega * a.dot(&omega)).normalize();
    let e2 = omega.cross(&e1);
    Ok(SphericalFrame { omega, e1, e2 })
}

/// A real 2-form `F_{mu nu}` on Minkowski space.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TwoForm {
    pub e: Vector3<f64>,
    pub b: Vector3<f64>,
}

impl TwoForm {
    pub fn new(e: [f64; 3], b: [f64; 3]) -> Self {
        Self { e: Vector3::from(e), b: Vector3::from(b) }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// Covariant components `F_{mu nu}`.
    pub fn matrix(&self) -> Matrix4<f64> {
        let (e, b) = (self.e, self.b);
        #[rustfmt::skip]
        let m = Matrix4::new(
            0.0,   e[0],  e[1],  e[2],
            -e[0], 0.0,  -b[2],  b[1],
            -e[1], b[2],  0.0,  -b[0],
            -e[2], -b[1], b[0],  0.0,
        );
        m
    }

    /// Reads the electric and magnetic parts from covariant components.
    /// Only the antisymmetric part of `m` is used.
    pub fn from_matrix(m: &Matrix4<f64>) -> Self {
        let a = |i: usize, j: usize| 0.5 * (m[(i, j)] - m[(j, i)]);
        Self::new([a(0, 1), a(0, 2), a(0, 3)], [-a(2, 3), -a(3, 1), -a(1, 2)])
    }

    /// `F(a, b) = F_{mu nu} a^mu b^nu`.
    pub fn eval(&self, a: &Vector4<f64>, b: &Vector4<f64>) -> f64 {
        (a.transpose() * self.matrix() * b)[(0, 0)]
    }

    /// Contravariant components `F^{mu nu}`.
    pub fn raised(&self) -> Matrix4<f64> {
        let g = eta();
        g * self.matrix() * g
    }

    /// `F_{rho sigma} F^{rho sigma} = 2(|B|^2 - |E|^2)`.
    pub fn invariant(&self) -> f64 {
        2.0 * (self.b.norm_squared() - self.e.norm_squared())
    }

    pub fn is_finite(&self) -> bool {
        self.e.iter().chain(self.b.iter()).all(|c| c.is_finite())
    }

    pub fn norm_sq(&self) -> f64 {
        self.e.norm_squared() + self.b.norm_squared()
    }
}

impl Add for TwoForm {
    type Output = TwoForm;
    fn add(self, o: TwoForm) -> TwoForm {
        TwoForm { e: self.e + o.e, b: self.b + o.b }
    }
}

impl Sub for TwoForm {
    type Output = TwoForm;
    fn sub(self, o: TwoForm) -> TwoForm {
        TwoForm { e: self.e - o.e, b: self.b - o.b }
    }
}

impl Neg for TwoForm {
    type Output = TwoForm;
    fn neg(self) -> TwoForm {
        TwoForm { e: -self.e, b: -self.b }
    }
}

impl Mul<f64> for TwoForm {
    type Output = TwoForm;
    fn mul(self, s: f64) -> TwoForm {
        TwoForm { e: self.e * s, b: self.b * s }
    }
}

/// Sign of the permutation `(a, b, c, d)` of `(0, 1, 2, 3)`, zero otherwise.
pub fn levi_civita(idx: [usize; 4]) -> f64 {
    let mut p = idx;
    for i in 0..4 {
        for j in (i + 1)..4 {
            if p[i] == p[j] {
                return 0.0;
            }
        }
    }
    let mut sign = 1.0;
    for i in 0..4 {
        while p[i] != i {
            let j = p[i];
            p.swap(i, j);
            sign = -sign;
        }
    }
    sign
}

/// `*F_{mu nu} = 1/2 F^{lambda sigma} eps_{lambda sigma mu nu}` with `eps_{0123} = +1`.
pub fn hodge_dual(f: &TwoForm) -> TwoForm {
    hodge_dual_oriented(f, 1.0)
}

/// Hodge dual with `eps_{0123} = orientation`. Passing `-1` reproduces the
/// opposite orientation convention; the identity checks use it as a
/// negative control.
pub fn hodge_dual_oriented(f: &TwoForm, orientation: f64) -> TwoForm {
    let up = f.raised();
    let mut m = Matrix4::zeros();
    for mu in 0..4 {
        for nu in 0..4 {
            let mut s = 0.0;
            for l in 0..4 {
                for k in 0..4 {
                    s += up[(l, k)] * levi_civita([l, k, mu, nu]);
                }
            }
            m[(mu, nu)] = 0.5 * orientation * s;
        }
    }
    TwoForm::from_matrix(&m)
}

/// Null components of a 2-form: `alpha_A = F(e_A, L)`, `alpha_bar_A = F(e_A, Lbar)`,
/// `rho = F(L, Lbar) / 2`, `sigma = F(e_1, e_2)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NullDecomposition {
    pub alpha: [f64; 2],
    pub alpha_bar: [f64; 2],
    pub rho: f64,
    pub sigma: f64,
}

impl NullDecomposition {
    pub fn alpha_norm(&self) -> f64 {
        self.alpha[0].hypot(self.alpha[1])
    }

    pub fn alpha_bar_norm(&self) -> f64 {
        self.alpha_bar[0].hypot(self.alpha_bar[1])
    }

    /// Rebuilds the 2-form from its null components in the given frame.
    pub fn to_two_form(&self, frame: &SphericalFrame) -> TwoForm {
        let [a1, a2] = self.alpha;
        let [ab1, ab2] = self.alpha_bar;
        let e = frame.omega * (-self.rho) - frame.e1 * (0.5 * (a1 + ab1)) - frame.e2 * (0.5 * (a2 + ab2));
        let b = frame.omega * (-self.sigma) + frame.e1 * (0.5 * (ab2 - a2)) + frame.e2 * (0.5 * (a1 - ab1));
        TwoForm { e, b }
    }
}

/// Null decomposition of `f` at `p` in `frame`; the frame must belong to `p`.
pub fn null_decompose(f: &TwoForm, p: &SpacetimePoint, frame: &SphericalFrame) -> Result<NullDecomposition> {
    let omega = p.omega()?;
    if (omega - frame.omega).norm() > 1e-10 {
        return Err(Error::Invalid("frame does not belong to the point".into()));
    }
    Ok(null_decompose_in(f, frame))
}

/// Null decomposition in a frame without checking the base point.
pub fn null_decompose_in(f: &TwoForm, frame: &SphericalFrame) -> NullDecomposition {
    let (l, lb) = (frame.l(), frame.lbar());
    let (e1, e2) = (frame.e4(0), frame.e4(1));
    NullDecomposition {
        alpha: [f.eval(&e1, &l), f.eval(&e2, &l)],
        alpha_bar: [f.eval(&e1, &lb), f.eval(&e2, &lb)],
        rho: 0.5 * f.eval(&l, &lb),
        sigma: f.eval(&e1, &e2),
    }
}

/// `T_{mu nu} = F_{mu beta} F_nu^beta - 1/4 eta_{mu nu} F_{rho sigma} F^{rho sigma}`.
pub fn energy_momentum(f: &TwoForm) -> Matrix4<f64> {
    let m = f.matrix();
    let g = eta();
    m * g * m.transpose() - g * (0.25 * f.invariant())
}

/// `T(a, b)` for a symmetric covariant tensor.
pub fn contract(t: &Matrix4<f64>, a: &Vector4<f64>, b: &Vector4<f64>) -> f64 {
    (a.transpose() * t * b)[(0, 0)]
}

/// Null components of a velocity: `v = v^L L + v^Lbar Lbar + v^A e_A`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityNull {
    pub l: f64,
    pub lbar: f64,
    pub a: [f64; 2],
}

pub fn velocity_null(v: &MassShellVelocity, frame: &SphericalFrame) -> VelocityNull {
    let v0 = v.v0();
    let vr = frame.omega.dot(&v.v);
    VelocityNull { l: 0.5 * (v0 + vr), lbar: 0.5 * (v0 - vr), a: [v.v.dot(&frame.e1), v.v.dot(&frame.e2)] }
}

/// `4 r^2 v^L v^Lbar - (r^2 + sum_{k<l} (x^k v^l - x^l v^k)^2)`, relative to
/// the size of the right side. The weights enter un-normalized (times `v^0`).
pub fn lagrange_residual(x: &Vector3<f64>, v: &MassShellVelocity) -> Result<f64> {
    let fr = spherical_frame(x)?;
    let n = velocity_null(v, &fr);
    let r2 = x.norm_squared();
    let mut rhs = r2;
    for (k, l) in [(0, 1), (0, 2), (1, 2)] {
        rhs += (x[k] * v.v[l] - x[l] * v.v[k]).powi(2);
    }
    Ok((4.0 * r2 * n.l * n.lbar - rhs) / rhs)
}

/// `2 t v^Lbar - ((t - r) v^0 - (x^i / r)(t v^i - x^i v^0))`, relative to
/// `t v^0`.
pub fn vlbar_residual(p: &SpacetimePoint, v: &MassShellVelocity) -> Result<f64> {
    let fr = spherical_frame(&p.x)?;
    let n = velocity_null(v, &fr);
    let (t, r, v0) = (p.t, p.r(), v.v0());
    let mut rhs = (t - r) * v0;
    for i in 0..3 {
        rhs -= p.x[i] / r * (t * v.v[i] - p.x[i] * v0);
    }
    Ok((2.0 * t * n.lbar - rhs) / (t.abs() * v0).max(1.0))
}

/// Largest of `|T_LL - |alpha|^2|`, `|T_LbarLbar - |alpha_bar|^2|` and
/// `|T_LLbar - rho^2 - sigma^2|`, relative to `|F|^2`.
pub fn energy_components_residual(f: &TwoForm, frame: &SphericalFrame) -> f64 {
    let t = energy_momentum(f);
    let d = null_decompose_in(f, frame);
    let (l, lb) = (frame.l(), frame.lbar());
    let r = [
        contract(&t, &l, &l) - d.alpha_norm().powi(2),
        contract(&t, &lb, &lb) - d.alpha_bar_norm().powi(2),
        contract(&t, &l, &lb) - d.rho * d.rho - d.sigma * d.sigma,
    ];
    r.iter().map(|c| c.abs()).fold(0.0, f64::max) / f.norm_sq().max(1e-300)
}

/// `|**F + F| / |F|` for the given orientation of `eps`.
pub fn double_dual_residual(f: &TwoForm, orientation: f64) -> f64 {
    let dd = hodge_dual_oriented(&hodge_dual_oriented(f, orientation), orientation);
    (dd + *f).norm_sq().sqrt() / f.norm_sq().sqrt().max(1e-300)
}

/// `|*F - F_expected|` where the dual of `(E, B)` is `(-B, E)` under
/// `eps_{0123} = +1`; detects an orientation flip that `**F = -F` cannot.
pub fn dual_components_residual(f: &TwoForm, orientation: f64) -> f64 {
    let d = hodge_dual_oriented(f, orientation);
    let want = TwoForm { e: -f.b, b: f.e };
    (d - want).norm_sq().sqrt() / f.norm_sq().sqrt().max(1e-300)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn frame_on_x_axis() {
        let fr = spherical_frame(&Vector3::new(2.0, 0.0, 0.0)).unwrap();
        assert_eq!(fr.e1, Vector3::new(0.0, 1.0, 0.0));
        assert_eq!(fr.e2, Vector3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn origin_is_rejected() {
        assert_eq!(spherical_frame(&Vector3::zeros()), Err(Error::AtOrigin("spherical frame")));
        assert!(SpacetimePoint::new(1.0, [0.0; 3]).omega().is_err());
    }

    #[test]
    fn levi_civita_signs() {
        assert_eq!(levi_civita([0, 1, 2, 3]), 1.0);
        assert_eq!(levi_civita([1, 0, 2, 3]), -1.0);
        assert_eq!(levi_civita([1, 2, 3, 0]), -1.0);
        assert_eq!(levi_civita([0, 0, 2, 3]), 0.0);
    }

    #[test]
    fn dual_of_dt_dx1() {
        let f = TwoForm::new([1.0, 0.0, 0.0], [0.0; 3]);
        let d = hodge_dual(&f).matrix();
        assert_abs_diff_eq!(d[(2, 3)], -1.0);
        assert_abs_diff_eq!(d[(0, 1)], 0.0);
    }

    #[test]
    fn matrix_roundtrip() {
        let f = TwoForm::new([1.0, -2.0, 0.5], [0.3, 0.7, -1.1]);
        assert_eq!(TwoForm::from_matrix(&f.matrix()), f);
        assert_abs_diff_eq!(f.matrix()[(2, 3)], -0.3);
    }
}
