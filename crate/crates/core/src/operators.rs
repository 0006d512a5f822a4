//! Vector fields on Minkowski space and on the mass-shell phase space
//! `(t, x, v)`: the conformal Killing fields, their complete lifts, the
//! weights and constant-free commutator identities with the transport
//! operator.
//!
//! Phase-space points are 7-vectors ordered `(t, x1, x2, x3, v1, v2, v3)`.
//! A first-order operator is represented by its coefficient vector and the
//! Jacobian of that vector, which is enough to compose two operators exactly
//! when the test function carries analytic second derivatives.

use nalgebra::{Matrix4, SMatrix, SVector, Vector3, Vector4};
use num_dual::{DualNum, HyperHyperDual64};

use crate::error::{Error, Result};
use crate::geometry::{spherical_frame, SpacetimePoint, TwoForm};

pub type Phase7 = SVector<f64, 7>;
pub type Mat7 = SMatrix<f64, 7, 7>;

/// Default finite-difference step used when a kernel does not supply
/// analytic derivatives.
pub const FD_STEP: f64 = 1e-5;

pub fn phase_point(t: f64, x: [f64; 3], v: [f64; 3]) -> Phase7 {
    Phase7::from_column_slice(&[t, x[0], x[1], x[2], v[0], v[1], v[2]])
}

pub fn split(y: &Phase7) -> (f64, Vector3<f64>, Vector3<f64>) {
    (y[0], Vector3::new(y[1], y[2], y[3]), Vector3::new(y[4], y[5], y[6]))
}

pub fn v0_of(v: &Vector3<f64>) -> f64 {
    (1.0 + v.norm_squared()).sqrt()
}

/// A scalar function on phase space.
pub trait ScalarKernel {
    fn value(&self, y: &Phase7) -> f64;

    fn gradient(&self, y: &Phase7) -> Phase7 {
        fd_gradient(&|z| self.value(z), y, FD_STEP)
    }

    fn hessian(&self, y: &Phase7) -> Mat7 {
        let mut h = Mat7::zeros();
        let s = 1e-4;
        for b in 0..7 {
            let mut yp = *y;
            let mut ym = *y;
            let step = s * (1.0 + y[b].abs());
            yp[b] += step;
            ym[b] -= step;
            let col = (self.gradient(&yp) - self.gradient(&ym)) / (2.0 * step);
            h.set_column(b, &col);
        }
        0.5 * (h + h.transpose())
    }
}

impl<K: ScalarKernel + ?Sized> ScalarKernel for &K {
    fn value(&self, y: &Phase7) -> f64 {
        (**self).value(y)
    }
    fn gradient(&self, y: &Phase7) -> Phase7 {
        (**self).gradient(y)
    }
    fn hessian(&self, y: &Phase7) -> Mat7 {
        (**self).hessian(y)
    }
}

/// Central-difference gradient of a scalar function on phase space.
pub fn fd_gradient(f: &dyn Fn(&Phase7) -> f64, y: &Phase7, h: f64) -> Phase7 {
    let mut g = Phase7::zeros();
    for a in 0..7 {
        let mut yp = *y;
        let mut ym = *y;
        yp[a] += h;
        ym[a] -= h;
        g[a] = (f(&yp) - f(&ym)) / (2.0 * h);
    }
    g
}

/// Kernel wrapper whose derivatives are always taken by central
/// differences with a fixed step, whatever the inner kernel supplies.
pub struct FdKernel<K> {
    pub inner: K,
    pub h: f64,
}

impl<K: ScalarKernel> ScalarKernel for FdKernel<K> {
    fn value(&self, y: &Phase7) -> f64 {
        self.inner.value(y)
    }
    fn gradient(&self, y: &Phase7) -> Phase7 {
        fd_gradient(&|z| self.inner.value(z), y, self.h)
    }
}

/// Closure-backed kernel with finite-difference derivatives.
pub struct FnKernel<F>(pub F);

impl<F: Fn(&Phase7) -> f64> ScalarKernel for FnKernel<F> {
    fn value(&self, y: &Phase7) -> f64 {
        (self.0)(y)
    }
}

/// A smooth test function: a sum of plane waves `a sin(k . y + phase)` plus
/// a constant, with exact gradient and Hessian.
#[derive(Debug, Clone)]
pub struct WaveKernel {
    pub offset: f64,
    pub modes: Vec<(f64, Phase7, f64)>,
}

impl ScalarKernel for WaveKernel {
    fn value(&self, y: &Phase7) -> f64 {
        self.offset + self.modes.iter().map(|(a, k, p)| a * (k.dot(y) + p).sin()).sum::<f64>()
    }
    fn gradient(&self, y: &Phase7) -> Phase7 {
        self.modes.iter().fold(Phase7::zeros(), |acc, (a, k, p)| acc + k * (a * (k.dot(y) + p).cos()))
    }
    fn hessian(&self, y: &Phase7) -> Mat7 {
        self.modes.iter().fold(Mat7::zeros(), |acc, (a, k, p)| acc - k * k.transpose() * (a * (k.dot(y) + p).sin()))
    }
}

/// A 2-form valued function of `(t, x)`.
pub trait FieldKernel: Sync {
    fn field(&self, t: f64, x: &Vector3<f64>) -> TwoForm;

    /// `d_mu F` for `mu = 0..3`.
    fn partials(&self, t: f64, x: &Vector3<f64>) -> [TwoForm; 4] {
        fd_field_partials(self, t, x, FD_STEP)
    }
}

impl<K: FieldKernel + ?Sized> FieldKernel for &K {
    fn field(&self, t: f64, x: &Vector3<f64>) -> TwoForm {
        (**self).field(t, x)
    }
    fn partials(&self, t: f64, x: &Vector3<f64>) -> [TwoForm; 4] {
        (**self).partials(t, x)
    }
}

pub fn fd_field_partials<K: FieldKernel + ?Sized>(k: &K, t: f64, x: &Vector3<f64>, h: f64) -> [TwoForm; 4] {
    let mut out = [TwoForm::zero(); 4];
    for (mu, slot) in out.iter_mut().enumerate() {
        let (mut tp, mut tm, mut xp, mut xm) = (t, t, *x, *x);
        if mu == 0 {
            tp += h;
            tm -= h;
        } else {
            xp[mu - 1] += h;
            xm[mu - 1] -= h;
        }
        *slot = (k.field(tp, &xp) - k.field(tm, &xm)) * (0.5 / h);
    }
    out
}

/// The identically vanishing field.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroField;

impl FieldKernel for ZeroField {
    fn field(&self, _t: f64, _x: &Vector3<f64>) -> TwoForm {
        TwoForm::zero()
    }
    fn partials(&self, _t: f64, _x: &Vector3<f64>) -> [TwoForm; 4] {
        [TwoForm::zero(); 4]
    }
}

/// Field kernel rescaled by a constant.
pub struct ScaledField<K> {
    pub inner: K,
    pub scale: f64,
}

impl<K: FieldKernel> FieldKernel for ScaledField<K> {
    fn field(&self, t: f64, x: &Vector3<f64>) -> TwoForm {
        self.inner.field(t, x) * self.scale
    }
    fn partials(&self, t: f64, x: &Vector3<f64>) -> [TwoForm; 4] {
        self.inner.partials(t, x).map(|p| p * self.scale)
    }
}

/// The eleven conformal Killing fields, ordered translations, rotations,
/// boosts, scaling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FieldId {
    Dt,
    D1,
    D2,
    D3,
    Rot12,
    Rot13,
    Rot23,
    Boost1,
    Boost2,
    Boost3,
    Scaling,
}

impl FieldId {
    pub const ALL: [FieldId; 11] = [
        FieldId::Dt,
        FieldId::D1,
        FieldId::D2,
        FieldId::D3,
        FieldId::Rot12,
        FieldId::Rot13,
        FieldId::Rot23,
        FieldId::Boost1,
        FieldId::Boost2,
        FieldId::Boost3,
        FieldId::Scaling,
    ];
    /// The Poincare fields (everything but the scaling).
    pub const POINCARE: [FieldId; 10] = [
        FieldId::Dt,
        FieldId::D1,
        FieldId::D2,
        FieldId::D3,
        FieldId::Rot12,
        FieldId::Rot13,
        FieldId::Rot23,
        FieldId::Boost1,
        FieldId::Boost2,
        FieldId::Boost3,
    ];
    /// Fields that get a modified counterpart: rotations, boosts, scaling.
    pub const MODIFIABLE: [FieldId; 7] = [
        FieldId::Rot12,
        FieldId::Rot13,
        FieldId::Rot23,
        FieldId::Boost1,
        FieldId::Boost2,
        FieldId::Boost3,
        FieldId::Scaling,
    ];
    pub const BOOSTS: [FieldId; 3] = [FieldId::Boost1, FieldId::Boost2, FieldId::Boost3];

    pub fn index(self) -> usize {
        FieldId::ALL.iter().position(|&z| z == self).unwrap()
    }

    pub fn name(self) -> &'static str {
        match self {
            FieldId::Dt => "dt",
            FieldId::D1 => "d1",
            FieldId::D2 => "d2",
            FieldId::D3 => "d3",
            FieldId::Rot12 => "rot12",
            FieldId::Rot13 => "rot13",
            FieldId::Rot23 => "rot23",
            FieldId::Boost1 => "boost1",
            FieldId::Boost2 => "boost2",
            FieldId::Boost3 => "boost3",
            FieldId::Scaling => "scaling",
        }
    }

    pub fn parse(s: &str) -> Result<FieldId> {
        FieldId::ALL
            .iter()
            .copied()
            .find(|z| z.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown vector field '{s}'")))
    }

    pub fn is_lifted(self) -> bool {
        self != FieldId::Scaling
    }

    /// Constant part `a^mu` of `Z^mu = a^mu + J^mu_nu x^nu`.
    fn translation(self) -> Vector4<f64> {
        let mut a = Vector4::zeros();
        match self {
            FieldId::Dt => a[0] = 1.0,
            FieldId::D1 => a[1] = 1.0,
            FieldId::D2 => a[2] = 1.0,
            FieldId::D3 => a[3] = 1.0,
            _ => {}
        }
        a
    }

    /// Constant Jacobian `J[mu][nu] = d_nu Z^mu`.
    pub fn jacobian(self) -> Matrix4<f64> {
        let mut j = Matrix4::zeros();
        let rot = |j: &mut Matrix4<f64>, a: usize, b: usize| {
            // x^a d_b - x^b d_a
            j[(b, a)] = 1.0;
            j[(a, b)] = -1.0;
        };
        match self {
            FieldId::Rot12 => rot(&mut j, 1, 2),
            FieldId::Rot13 => rot(&mut j, 1, 3),
            FieldId::Rot23 => rot(&mut j, 2, 3),
            FieldId::Boost1 | FieldId::Boost2 | FieldId::Boost3 => {
                let k = self.index() - FieldId::Boost1.index() + 1;
                j[(k, 0)] = 1.0;
                j[(0, k)] = 1.0;
            }
            FieldId::Scaling => j = Matrix4::identity(),
            _ => {}
        }
        j
    }

    /// Spacetime coefficients `Z^mu(t, x)`.
    pub fn coefficients(self, t: f64, x: &Vector3<f64>) -> Vector4<f64> {
        self.translation() + self.jacobian() * Vector4::new(t, x[0], x[1], x[2])
    }

    /// Lorentz-field index `k` of a boost `Omega_{0k}` (1-based).
    pub fn boost_axis(self) -> Option<usize> {
        match self {
            FieldId::Boost1 => Some(1),
            FieldId::Boost2 => Some(2),
            FieldId::Boost3 => Some(3),
            _ => None,
        }
    }
}

/// A first-order differential operator on phase space.
pub trait PhaseField {
    fn coeffs(&self, y: &Phase7) -> Phase7;
    /// Rows are coefficients, columns are phase-space derivatives.
    fn jacobian(&self, y: &Phase7) -> Mat7;
}

/// Applies a phase-space operator to a kernel at a point.
pub fn apply<A: PhaseField + ?Sized, K: ScalarKernel + ?Sized>(a: &A, g: &K, y: &Phase7) -> f64 {
    a.coeffs(y).dot(&g.gradient(y))
}

/// `A(g)` viewed as a new kernel. Its gradient uses the Hessian of `g`, so
/// composing with analytic kernels is exact.
pub struct Applied<'a, A: ?Sized, K: ?Sized> {
    pub op: &'a A,
    pub g: &'a K,
}

impl<A: PhaseField + ?Sized, K: ScalarKernel + ?Sized> ScalarKernel for Applied<'_, A, K> {
    fn value(&self, y: &Phase7) -> f64 {
        apply(self.op, self.g, y)
    }
    fn gradient(&self, y: &Phase7) -> Phase7 {
        self.op.jacobian(y).transpose() * self.g.gradient(y) + self.g.hessian(y) * self.op.coeffs(y)
    }
}

/// Coordinate derivative `d/dy^a` as a phase-space operator.
pub struct Coordinate(pub usize);

impl PhaseField for Coordinate {
    fn coeffs(&self, _y: &Phase7) -> Phase7 {
        let mut c = Phase7::zeros();
        c[self.0] = 1.0;
        c
    }
    fn jacobian(&self, _y: &Phase7) -> Mat7 {
        Mat7::zeros()
    }
}

/// Free transport `T = v^mu d_mu`.
pub struct Transport;

impl PhaseField for Transport {
    fn coeffs(&self, y: &Phase7) -> Phase7 {
        let (_, _, v) = split(y);
        Phase7::from_column_slice(&[v0_of(&v), v[0], v[1], v[2], 0.0, 0.0, 0.0])
    }
    fn jacobian(&self, y: &Phase7) -> Mat7 {
        let (_, _, v) = split(y);
        let v0 = v0_of(&v);
        let mut j = Mat7::zeros();
        for i in 0..3 {
            j[(0, 4 + i)] = v[i] / v0;
            j[(1 + i, 4 + i)] = 1.0;
        }
        j
    }
}

/// `G(v, w)` for a 2-form and a spatial 3-vector `w`: `G_{mu j} v^mu w^j`.
pub fn form_on_velocity(g: &TwoForm, v: &Vector3<f64>, w: &Vector3<f64>) -> f64 {
    force_density(g, v).dot(w)
}

/// `v^mu G_{mu j} = v^0 E_j + (v x B)_j`.
pub fn force_density(g: &TwoForm, v: &Vector3<f64>) -> Vector3<f64> {
    g.e * v0_of(v) + v.cross(&g.b)
}

/// Vlasov operator `T_F = v^mu d_mu + F(v, grad_v)`.
pub struct ForcedTransport<'a, K: ?Sized> {
    pub field: &'a K,
}

impl<K: FieldKernel + ?Sized> PhaseField for ForcedTransport<'_, K> {
    fn coeffs(&self, y: &Phase7) -> Phase7 {
        let (t, x, v) = split(y);
        let k = force_density(&self.field.field(t, &x), &v);
        let mut c = Transport.coeffs(y);
        c.fixed_rows_mut::<3>(4).copy_from(&k);
        c
    }
    fn jacobian(&self, y: &Phase7) -> Mat7 {
        let (t, x, v) = split(y);
        let f = self.field.field(t, &x);
        let dp = self.field.partials(t, &x);
        let v0 = v0_of(&v);
        let mut j = Transport.jacobian(y);
        for (mu, d) in dp.iter().enumerate() {
            let col = force_density(d, &v);
            for i in 0..3 {
                j[(4 + i, mu)] = col[i];
            }
        }
        for m in 0..3 {
            let mut em = Vector3::zeros();
            em[m] = 1.0;
            let col = f.e * (v[m] / v0) + em.cross(&f.b);
            for i in 0..3 {
                j[(4 + i, 4 + m)] = col[i];
            }
        }
        j
    }
}

/// Complete lift of a Killing field to the mass shell, or the bare scaling
/// field.
#[derive(Debug, Clone, Copy)]
pub struct Lifted(pub FieldId);

impl PhaseField for Lifted {
    fn coeffs(&self, y: &Phase7) -> Phase7 {
        let (t, x, v) = split(y);
        let z = self.0.coefficients(t, &x);
        let mut c = Phase7::zeros();
        c.fixed_rows_mut::<4>(0).copy_from(&z);
        if self.0.is_lifted() {
            let jz = self.0.jacobian();
            let v4 = Vector4::new(v0_of(&v), v[0], v[1], v[2]);
            let w = jz * v4;
            for i in 0..3 {
                c[4 + i] = w[1 + i];
            }
        }
        c
    }
    fn jacobian(&self, y: &Phase7) -> Mat7 {
        let (_, _, v) = split(y);
        let jz = self.0.jacobian();
        let mut j = Mat7::zeros();
        j.fixed_view_mut::<4, 4>(0, 0).copy_from(&jz);
        if self.0.is_lifted() {
            let v0 = v0_of(&v);
            for i in 0..3 {
                for m in 0..3 {
                    j[(4 + i, 4 + m)] = jz[(1 + i, 1 + m)] + jz[(1 + i, 0)] * v[m] / v0;
                }
            }
        }
        j
    }
}

/// `X_i = d_i + (v^i / v^0) d_t`, with `i` zero-based.
#[derive(Debug, Clone, Copy)]
pub struct XField(pub usize);

impl PhaseField for XField {
    fn coeffs(&self, y: &Phase7) -> Phase7 {
        let (_, _, v) = split(y);
        let mut c = Phase7::zeros();
        c[0] = v[self.0] / v0_of(&v);
        c[1 + self.0] = 1.0;
        c
    }
    fn jacobian(&self, y: &Phase7) -> Mat7 {
        let (_, _, v) = split(y);
        let v0 = v0_of(&v);
        let mut j = Mat7::zeros();
        for m in 0..3 {
            let d = if m == self.0 { 1.0 / v0 } else { 0.0 };
            j[(0, 4 + m)] = d - v[self.0] * v[m] / v0.powi(3);
        }
        j
    }
}

/// Modified field `Y = Zhat + Phi^j X_j`.
pub struct Modified<'a> {
    pub base: FieldId,
    pub phi: [&'a dyn ScalarKernel; 3],
}

impl PhaseField for Modified<'_> {
    fn coeffs(&self, y: &Phase7) -> Phase7 {
        let mut c = Lifted(self.base).coeffs(y);
        for j in 0..3 {
            c += XField(j).coeffs(y) * self.phi[j].value(y);
        }
        c
    }
    fn jacobian(&self, y: &Phase7) -> Mat7 {
        let mut m = Lifted(self.base).jacobian(y);
        for j in 0..3 {
            let xj = XField(j);
            m += xj.coeffs(y) * self.phi[j].gradient(y).transpose() + xj.jacobian(y) * self.phi[j].value(y);
        }
        m
    }
}

pub fn apply_lift<K: ScalarKernel + ?Sized>(z: FieldId, g: &K, y: &Phase7) -> f64 {
    apply(&Lifted(z), g, y)
}

pub fn apply_modified<K: ScalarKernel + ?Sized>(z: FieldId, phi: [&dyn ScalarKernel; 3], g: &K, y: &Phase7) -> f64 {
    apply(&Modified { base: z, phi }, g, y)
}

/// The weights `v^mu / v^0` and `z_{mu nu}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WeightId {
    V0,
    V1,
    V2,
    V3,
    Z01,
    Z02,
    Z03,
    Z12,
    Z13,
    Z23,
}

impl WeightId {
    pub const ALL: [WeightId; 10] = [
        WeightId::V0,
        WeightId::V1,
        WeightId::V2,
        WeightId::V3,
        WeightId::Z01,
        WeightId::Z02,
        WeightId::Z03,
        WeightId::Z12,
        WeightId::Z13,
        WeightId::Z23,
    ];

    pub fn index(self) -> usize {
        WeightId::ALL.iter().position(|&w| w == self).unwrap()
    }

    /// Index pair `(mu, nu)` such that the weight is `(x^mu v^nu - x^nu v^mu)/v^0`,
    /// or `None` for the `v^mu / v^0` weights.
    fn pair(self) -> Option<(usize, usize)> {
        match self {
            WeightId::Z01 => Some((0, 1)),
            WeightId::Z02 => Some((0, 2)),
            WeightId::Z03 => Some((0, 3)),
            WeightId::Z12 => Some((1, 2)),
            WeightId::Z13 => Some((1, 3)),
            WeightId::Z23 => Some((2, 3)),
            _ => None,
        }
    }
}

/// `v^0` times the weight, generic so that it can run on dual numbers.
pub fn scaled_weight<D: DualNum<f64> + Copy>(w: WeightId, y: &[D; 7]) -> D {
    let v0 = (D::one() + y[4] * y[4] + y[5] * y[5] + y[6] * y[6]).sqrt();
    let x4 = [y[0], y[1], y[2], y[3]];
    let v4 = [v0, y[4], y[5], y[6]];
    match w.pair() {
        None => v4[w.index()],
        Some((a, b)) => x4[a] * v4[b] - x4[b] * v4[a],
    }
}

/// Weight value at `(t, x, v)`.
pub fn weight(w: WeightId, t: f64, x: &Vector3<f64>, v: &Vector3<f64>) -> f64 {
    let y = [t, x[0], x[1], x[2], v[0], v[1], v[2]];
    scaled_weight(w, &y) / v0_of(v)
}

/// All ten weights in the canonical order.
pub fn weights(t: f64, x: &Vector3<f64>, v: &Vector3<f64>) -> [f64; 10] {
    WeightId::ALL.map(|w| weight(w, t, x, v))
}

/// Kernel `v^0 z` for a weight `z`.
pub struct ScaledWeightKernel(pub WeightId);

impl ScalarKernel for ScaledWeightKernel {
    fn value(&self, y: &Phase7) -> f64 {
        let a: [f64; 7] = (*y).into();
        scaled_weight(self.0, &a)
    }
}

use WeightId as W;

/// `Zhat(v^0 z)` as `Some((sign, w))` meaning `sign * v^0 w`, or `None` for zero.
/// Rows follow `FieldId::ALL`, columns `WeightId::ALL`.
#[rustfmt::skip]
pub const WEIGHT_ACTION: [[Option<(f64, WeightId)>; 10]; 11] = [
    // dt
    [None, None, None, None, Some((1.0, W::V1)), Some((1.0, W::V2)), Some((1.0, W::V3)), None, None, None],
    // d1
    [None, None, None, None, Some((-1.0, W::V0)), None, None, Some((1.0, W::V2)), Some((1.0, W::V3)), None],
    // d2
    [None, None, None, None, None, Some((-1.0, W::V0)), None, Some((-1.0, W::V1)), None, Some((1.0, W::V3))],
    // d3
    [None, None, None, None, None, None, Some((-1.0, W::V0)), None, Some((-1.0, W::V1)), Some((-1.0, W::V2))],
    // rot12
    [None, Some((-1.0, W::V2)), Some((1.0, W::V1)), None, Some((-1.0, W::Z02)), Some((1.0, W::Z01)), None, None, Some((-1.0, W::Z23)), Some((1.0, W::Z13))],
    // rot13
    [None, Some((-1.0, W::V3)), None, Some((1.0, W::V1)), Some((-1.0, W::Z03)), None, Some((1.0, W::Z01)), Some((1.0, W::Z23)), None, Some((-1.0, W::Z12))],
    // rot23
    [None, None, Some((-1.0, W::V3)), Some((1.0, W::V2)), None, Some((-1.0, W::Z03)), Some((1.0, W::Z02)), Some((-1.0, W::Z13)), Some((1.0, W::Z12)), None],
    // boost1
    [Some((1.0, W::V1)), Some((1.0, W::V0)), None, None, None, Some((1.0, W::Z12)), Some((1.0, W::Z13)), Some((1.0, W::Z02)), Some((1.0, W::Z03)), None],
    // boost2
    [Some((1.0, W::V2)), None, Some((1.0, W::V0)), None, Some((-1.0, W::Z12)), None, Some((1.0, W::Z23)), Some((-1.0, W::Z01)), None, Some((1.0, W::Z03))],
    // boost3
    [Some((1.0, W::V3)), None, None, Some((1.0, W::V0)), Some((-1.0, W::Z13)), Some((-1.0, W::Z23)), None, None, Some((-1.0, W::Z01)), Some((-1.0, W::Z02))],
    // scaling
    [None, None, None, None, Some((1.0, W::Z01)), Some((1.0, W::Z02)), Some((1.0, W::Z03)), Some((1.0, W::Z12)), Some((1.0, W::Z13)), Some((1.0, W::Z23))],
];

/// Lie derivative of a 2-form along a conformal Killing field:
/// `L_Z(F)_{mu nu} = Z(F_{mu nu}) + d_mu(Z^l) F_{l nu} + d_nu(Z^l) F_{mu l}`.
pub fn lie_derivative<K: FieldKernel + ?Sized>(z: FieldId, f: &K, t: f64, x: &Vector3<f64>) -> TwoForm {
    let c = z.coefficients(t, x);
    let dp = f.partials(t, x);
    lie_from_parts(z, &c, &f.field(t, x), &dp)
}

/// Lie derivative assembled from field values and partials at a point.
pub fn lie_from_parts(z: FieldId, c: &Vector4<f64>, f: &TwoForm, dp: &[TwoForm; 4]) -> TwoForm {
    let m = f.matrix();
    let j = z.jacobian();
    let mut dz = Matrix4::zeros();
    for (mu, d) in dp.iter().enumerate() {
        dz += d.matrix() * c[mu];
    }
    TwoForm::from_matrix(&(dz + j.transpose() * m + m * j))
}

/// `L_Z F` as a field kernel, with finite-difference partials. Nesting gives
/// iterated Lie derivatives.
pub struct LieKernel<K> {
    pub z: FieldId,
    pub inner: K,
}

impl<K: FieldKernel> FieldKernel for LieKernel<K> {
    fn field(&self, t: f64, x: &Vector3<f64>) -> TwoForm {
        lie_derivative(self.z, &self.inner, t, x)
    }
}

/// `L_{X_i}(F) = d_i F + (v^i / v^0) d_t F` (zero-based `i`).
pub fn lie_x(i: usize, dp: &[TwoForm; 4], v: &Vector3<f64>) -> TwoForm {
    dp[1 + i] + dp[0] * (v[i] / v0_of(v))
}

/// `(v^mu / v^0) F_{mu X_i}` with `F_{mu X_i} = F_{mu i} + (v^i/v^0) F_{mu 0}`.
fn f_on_x(f: &TwoForm, v: &Vector3<f64>, i: usize) -> f64 {
    let v0 = v0_of(v);
    let v4 = Vector4::new(v0, v[0], v[1], v[2]);
    let mut xi = Vector4::new(v[i] / v0, 0.0, 0.0, 0.0);
    xi[1 + i] = 1.0;
    f.eval(&v4, &xi) / v0
}

/// How first derivatives of composed operators are obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DerivativeMode {
    /// Exact composition through the kernel's gradient and Hessian.
    Analytic,
    /// Central differences of the inner application with the given step.
    FiniteDifference(f64),
}

/// Commutator identities that can be checked pointwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Identity {
    /// `[T, Zhat] = 0` for Poincare fields and `[T, S] = T`.
    Free(FieldId),
    /// `[T_F, Zhat] g = -L_Z(F)(v, grad_v g)`; for the scaling field
    /// `[T_F, S] g = T_F g + F(v, grad_v g) - L_S(F)(v, grad_v g)`.
    Forced(FieldId),
    /// `[T_F, X_i] = -L_{X_i}(F)(v, grad_v) + (v^mu/v^0) F_{mu X_i} d_t` (zero-based).
    ForcedX(usize),
    /// `[T_F, Y]` in the closed commutator form, with the `Phi` transport
    /// defect appended so the identity holds for arbitrary smooth `Phi`.
    ForcedModified(FieldId),
}

/// Inputs for a commutator check.
pub struct CommutatorInput<'a> {
    pub field: &'a dyn FieldKernel,
    pub phi: Option<[&'a dyn ScalarKernel; 3]>,
    pub mode: DerivativeMode,
}

/// `A(B g)` at `y`.
fn compose<A: PhaseField + ?Sized, B: PhaseField + ?Sized, K: ScalarKernel + ?Sized>(
    a: &A,
    b: &B,
    g: &K,
    y: &Phase7,
    mode: DerivativeMode,
) -> f64 {
    let inner = Applied { op: b, g };
    match mode {
        DerivativeMode::Analytic => apply(a, &inner, y),
        DerivativeMode::FiniteDifference(h) => {
            let c = a.coeffs(y);
            (inner.value(&(y + c * h)) - inner.value(&(y - c * h))) / (2.0 * h)
        }
    }
}

fn commutator<A: PhaseField + ?Sized, B: PhaseField + ?Sized, K: ScalarKernel + ?Sized>(
    a: &A,
    b: &B,
    g: &K,
    y: &Phase7,
    mode: DerivativeMode,
) -> f64 {
    compose(a, b, g, y, mode) - compose(b, a, g, y, mode)
}

fn grad_v(grad: &Phase7) -> Vector3<f64> {
    Vector3::new(grad[4], grad[5], grad[6])
}

/// Left side minus right side of the named identity at `y`.
pub fn commutator_residual<K: ScalarKernel + ?Sized>(
    id: Identity,
    g: &K,
    y: &Phase7,
    input: &CommutatorInput<'_>,
) -> Result<f64> {
    let (t, x, v) = split(y);
    let mode = input.mode;
    let dg = g.gradient(y);
    let gv = grad_v(&dg);
    let tf = ForcedTransport { field: input.field };
    let f = input.field.field(t, &x);
    Ok(match id {
        Identity::Free(z) => {
            let lhs = commutator(&Transport, &Lifted(z), g, y, mode);
            let rhs = if z == FieldId::Scaling { apply(&Transport, g, y) } else { 0.0 };
            lhs - rhs
        }
        Identity::Forced(z) => {
            let lhs = commutator(&tf, &Lifted(z), g, y, mode);
            let lz = lie_derivative(z, input.field, t, &x);
            let mut rhs = -form_on_velocity(&lz, &v, &gv);
            if z == FieldId::Scaling {
                rhs += apply(&tf, g, y) + form_on_velocity(&f, &v, &gv);
            }
            lhs - rhs
        }
        Identity::ForcedX(i) => {
            if i > 2 {
                return Err(Error::Invalid(format!("X index {i} out of range")));
            }
            let lhs = commutator(&tf, &XField(i), g, y, mode);
            let dp = input.field.partials(t, &x);
            let rhs = -form_on_velocity(&lie_x(i, &dp, &v), &v, &gv) + f_on_x(&f, &v, i) * dg[0];
            lhs - rhs
        }
        Identity::ForcedModified(z) => {
            let phi = input.phi.ok_or_else(|| Error::Invalid("modified field needs Phi kernels".into()))?;
            let ym = Modified { base: z, phi };
            let lhs = commutator(&tf, &ym, g, y, mode);
            lhs - modified_commutator_rhs(z, phi, input.field, g, y)
        }
    })
}

/// Closed form of `[T_F, Y] g` plus the transport defect of `Phi`.
///
/// For a Poincare field this is
/// `-(v^mu/v^0) L_Z(F)_mu^j (Omegahat_{0j} + z_{0j} d_t) g -
/// Phi^j L_{X_j}(F)(v, grad_v g) + Phi^j (v^mu/v^0) F_{mu X_j} d_t g`
/// (using `Y_{0j} - Phi^k X_k = Omegahat_{0j}`). For the scaling field the
/// first factor is `+(v^mu/v^0)(F - L_S F)_mu^j` and `T_F g` is added.
/// The defect `(T_F Phi^j - source^j) X_j g` vanishes when `Phi` solves its
/// transport equation.
pub fn modified_commutator_rhs<K: ScalarKernel + ?Sized>(
    z: FieldId,
    phi: [&dyn ScalarKernel; 3],
    field: &dyn FieldKernel,
    g: &K,
    y: &Phase7,
) -> f64 {
    let (t, x, v) = split(y);
    let v0 = v0_of(&v);
    let v4 = Vector4::new(v0, v[0], v[1], v[2]);
    let f = field.field(t, &x);
    let dp = field.partials(t, &x);
    let c = z.coefficients(t, &x);
    let lz = lie_from_parts(z, &c, &f, &dp);
    // Coefficient form G_mu^j contracted with v^mu / v^0.
    let (coef_form, sign) = if z == FieldId::Scaling { (f - lz, 1.0) } else { (lz, -1.0) };
    let cm = coef_form.matrix();
    let tf = ForcedTransport { field };
    let dg = g.gradient(y);
    let mut rhs = 0.0;
    for j in 0..3 {
        let vf = (v4.transpose() * cm.column(1 + j))[(0, 0)] / v0;
        let boost = [FieldId::Boost1, FieldId::Boost2, FieldId::Boost3][j];
        let z0j = weight([W::Z01, W::Z02, W::Z03][j], t, &x, &v);
        let term = apply_lift(boost, g, y) + z0j * dg[0];
        rhs += sign * vf * term;
        let p = phi[j].value(y);
        rhs += -p * form_on_velocity(&lie_x(j, &dp, &v), &v, &grad_v(&dg)) + p * f_on_x(&f, &v, j) * dg[0];
        let source = phi_source_from_parts(z, t, &v, &f, &lz, j);
        let defect = apply(&tf, phi[j], y) - source;
        rhs += defect * apply(&XField(j), g, y);
    }
    if z == FieldId::Scaling {
        rhs += apply(&tf, g, y);
    }
    rhs
}

/// Right side of the transport equation for `Phi^k_Z` (zero-based `k`):
/// `-t (v^mu/v^0) L_Z(F)_{mu k}` for Poincare fields and
/// `t (v^mu/v^0)(F_{mu k} - L_S(F)_{mu k})` for the scaling field.
pub fn phi_source<K: FieldKernel + ?Sized>(z: FieldId, field: &K, t: f64, x: &Vector3<f64>, v: &Vector3<f64>) -> Vector3<f64> {
    let f = field.field(t, x);
    let lz = lie_derivative(z, field, t, x);
    Vector3::from_fn(|k, _| phi_source_from_parts(z, t, v, &f, &lz, k))
}

pub fn phi_source_from_parts(z: FieldId, t: f64, v: &Vector3<f64>, f: &TwoForm, lz: &TwoForm, k: usize) -> f64 {
    let vf = |g: &TwoForm| force_density(g, v)[k] / v0_of(v);
    if z == FieldId::Scaling {
        t * (vf(f) - vf(lz))
    } else {
        -t * vf(lz)
    }
}

/// The weight-action outcomes: `Zhat(v^0 z)` compared with the table.
/// Returns the largest absolute mismatch over all (field, weight) pairs.
pub fn weight_action_residual(y: &Phase7) -> f64 {
    let a: [f64; 7] = (*y).into();
    let mut worst: f64 = 0.0;
    for (zi, z) in FieldId::ALL.iter().enumerate() {
        for (wi, w) in WeightId::ALL.iter().enumerate() {
            let got = apply_lift(*z, &AnalyticWeight(*w), y);
            let want = match WEIGHT_ACTION[zi][wi] {
                None => 0.0,
                Some((s, w2)) => s * scaled_weight(w2, &a),
            };
            worst = worst.max((got - want).abs());
        }
    }
    worst
}

/// `v^0 z` with derivatives from hyper-dual evaluation.
struct AnalyticWeight(WeightId);

impl ScalarKernel for AnalyticWeight {
    fn value(&self, y: &Phase7) -> f64 {
        let a: [f64; 7] = (*y).into();
        scaled_weight(self.0, &a)
    }
    fn gradient(&self, y: &Phase7) -> Phase7 {
        let mut g = Phase7::zeros();
        for a in 0..7 {
            let mut d = [num_dual::Dual64::from_re(0.0); 7];
            for (i, s) in d.iter_mut().enumerate() {
                *s = num_dual::Dual64::from_re(y[i]);
            }
            d[a].eps = 1.0;
            g[a] = scaled_weight(self.0, &d).eps;
        }
        g
    }
}

/// Tangential derivative identities at a phase-space point (all need `r > 0`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GoodDerivative {
    /// `(t - r) Lbar = S - (x^i/r) Omega_{0i}`.
    Lbar,
    /// `(t + r) L = S + (x^i/r) Omega_{0i}`.
    L,
    /// `r e_A = C_A^{ij} Omega_{ij}`, zero-based `A`.
    Angular(usize),
    /// `(t - r) d_t = (t/(t+r)) S - (x^i/(t+r)) Omega_{0i}`.
    Time,
    /// `(t - r) d_i = (t/(t+r)) Omega_{0i} - (x^i/(t+r)) S + (x^j/(t+r)) Omega_{ij}`, zero-based `i`.
    Space(usize),
}

/// Bounded coefficients `C_A^{12}, C_A^{13}, C_A^{23}` with `r e_A = C_A^{ij} Omega_{ij}`.
pub fn angular_coefficients(x: &Vector3<f64>, a: usize) -> Result<[f64; 3]> {
    let fr = spherical_frame(x)?;
    let w = fr.omega.cross(&fr.e(a));
    Ok([w[2], -w[1], w[0]])
}

/// Residual of a tangential-derivative identity acting on `g` at `y`.
/// Only the spacetime part of the fields enters.
pub fn good_derivative_residual<K: ScalarKernel + ?Sized>(which: GoodDerivative, g: &K, y: &Phase7) -> Result<f64> {
    let (t, x, _) = split(y);
    let r = x.norm();
    if r == 0.0 {
        return Err(Error::AtOrigin("tangential derivative"));
    }
    let om = x / r;
    let dg = g.gradient(y);
    let dtx = Vector4::new(dg[0], dg[1], dg[2], dg[3]);
    let op = |z: FieldId| z.coefficients(t, &x).dot(&dtx);
    let boosts: f64 = (0..3).map(|i| x[i] / r * op(FieldId::BOOSTS[i])).sum();
    let dr = om.dot(&Vector3::new(dg[1], dg[2], dg[3]));
    Ok(match which {
        GoodDerivative::Lbar => (t - r) * (dg[0] - dr) - (op(FieldId::Scaling) - boosts),
        GoodDerivative::L => (t + r) * (dg[0] + dr) - (op(FieldId::Scaling) + boosts),
        GoodDerivative::Angular(a) => {
            let fr = spherical_frame(&x)?;
            let ea = fr.e(a);
            let c = angular_coefficients(&x, a)?;
            let lhs = r * ea.dot(&Vector3::new(dg[1], dg[2], dg[3]));
            let rhs = c[0] * op(FieldId::Rot12) + c[1] * op(FieldId::Rot13) + c[2] * op(FieldId::Rot23);
            lhs - rhs
        }
        GoodDerivative::Time => {
            let s = t + r;
            (t - r) * dg[0] - (t / s * op(FieldId::Scaling) - boosts * r / s)
        }
        GoodDerivative::Space(i) => {
            let s = t + r;
            let rot = |a: usize, b: usize| -> f64 {
                // Omega_{ab} for any ordered pair
                match (a, b) {
                    (0, 1) => op(FieldId::Rot12),
                    (1, 0) => -op(FieldId::Rot12),
                    (0, 2) => op(FieldId::Rot13),
                    (2, 0) => -op(FieldId::Rot13),
                    (1, 2) => op(FieldId::Rot23),
                    (2, 1) => -op(FieldId::Rot23),
                    _ => 0.0,
                }
            };
            let ang: f64 = (0..3).map(|j| x[j] * rot(i, j)).sum();
            (t - r) * dg[1 + i] - (t / s * op(FieldId::BOOSTS[i]) - x[i] / s * op(FieldId::Scaling) + ang / s)
        }
    })
}

/// Residual of the radial velocity-gradient identity
/// `(grad_v g)^r = (x^i/(r v^0)) Omegahat_{0i} g - S g / v^0 + ((t - r)/v^0) Lbar g`.
pub fn vradial_residual<K: ScalarKernel + ?Sized>(g: &K, y: &Phase7) -> Result<f64> {
    let (t, x, v) = split(y);
    let r = x.norm();
    if r == 0.0 {
        return Err(Error::AtOrigin("radial velocity derivative"));
    }
    let om = x / r;
    let v0 = v0_of(&v);
    let dg = g.gradient(y);
    let lhs = om.dot(&grad_v(&dg));
    let boosts: f64 = (0..3).map(|i| om[i] * apply_lift(FieldId::BOOSTS[i], g, y)).sum();
    let lbar = dg[0] - om.dot(&Vector3::new(dg[1], dg[2], dg[3]));
    let rhs = boosts / v0 - apply_lift(FieldId::Scaling, g, y) / v0 + (t - r) / v0 * lbar;
    Ok(lhs - rhs)
}

/// Null expansion of `G(v, w)` for a spatial vector `w`:
/// seven products and their coefficients, whose weighted sum is `G(v, w)`.
/// The products are, in order, `v^L rho w^Lbar`, `v^Lbar rho w^L`,
/// `v^A alpha_A w^L`, `v^A alphabar_A w^Lbar`, `eps_{BA} v^B sigma w^A`,
/// `v^L alpha_A w^A`, `v^Lbar alphabar_A w^A`, with `w^L = w^r/2`,
/// `w^Lbar = -w^r/2`.
pub const NULL_EXPANSION_COEFFS: [f64; 7] = [2.0, -2.0, 1.0, 1.0, 1.0, -1.0, -1.0];

pub fn null_expansion(g: &TwoForm, v: &Vector3<f64>, w: &Vector3<f64>, x: &Vector3<f64>) -> Result<[f64; 7]> {
    use crate::geometry::{null_decompose_in, velocity_null, MassShellVelocity};
    let fr = spherical_frame(x)?;
    let nd = null_decompose_in(g, &fr);
    let vn = velocity_null(&MassShellVelocity { v: *v }, &fr);
    let wr = fr.omega.dot(w);
    let (wl, wlb) = (0.5 * wr, -0.5 * wr);
    let wa = [w.dot(&fr.e1), w.dot(&fr.e2)];
    let va = vn.a;
    Ok([
        vn.l * nd.rho * wlb,
        vn.lbar * nd.rho * wl,
        (va[0] * nd.alpha[0] + va[1] * nd.alpha[1]) * wl,
        (va[0] * nd.alpha_bar[0] + va[1] * nd.alpha_bar[1]) * wlb,
        // eps_{12} = 1, so eps_{BA} v^B w^A = v^1 w^2 - v^2 w^1
        (va[0] * wa[1] - va[1] * wa[0]) * nd.sigma,
        vn.l * (nd.alpha[0] * wa[0] + nd.alpha[1] * wa[1]),
        vn.lbar * (nd.alpha_bar[0] * wa[0] + nd.alpha_bar[1] * wa[1]),
    ])
}

/// Residual of the null expansion against the direct contraction.
pub fn null_expansion_residual(g: &TwoForm, v: &Vector3<f64>, w: &Vector3<f64>, x: &Vector3<f64>) -> Result<f64> {
    let terms = null_expansion(g, v, w, x)?;
    let sum: f64 = terms.iter().zip(NULL_EXPANSION_COEFFS).map(|(a, c)| a * c).sum();
    Ok(sum - form_on_velocity(g, v, w))
}

/// Flow of a lifted field (or of the bare scaling) on phase space, generic
/// over dual numbers so it can be differentiated in the flow parameter.
pub fn flow<D: DualNum<f64> + Copy>(z: FieldId, s: D, y: &[D; 7]) -> [D; 7] {
    let mut o = *y;
    match z {
        FieldId::Dt | FieldId::D1 | FieldId::D2 | FieldId::D3 => o[z.index()] += s,
        FieldId::Rot12 | FieldId::Rot13 | FieldId::Rot23 => {
            let (a, b) = match z {
                FieldId::Rot12 => (1, 2),
                FieldId::Rot13 => (1, 3),
                _ => (2, 3),
            };
            let (c, sn) = (s.cos(), s.sin());
            o[a] = y[a] * c - y[b] * sn;
            o[b] = y[a] * sn + y[b] * c;
            o[a + 3] = y[a + 3] * c - y[b + 3] * sn;
            o[b + 3] = y[a + 3] * sn + y[b + 3] * c;
        }
        FieldId::Boost1 | FieldId::Boost2 | FieldId::Boost3 => {
            let k = z.boost_axis().unwrap();
            let (ch, sh) = (s.cosh(), s.sinh());
            let v0 = (D::one() + y[4] * y[4] + y[5] * y[5] + y[6] * y[6]).sqrt();
            o[0] = y[0] * ch + y[k] * sh;
            o[k] = y[k] * ch + y[0] * sh;
            o[k + 3] = y[k + 3] * ch + v0 * sh;
        }
        FieldId::Scaling => {
            let e = s.exp();
            for c in o.iter_mut().take(4) {
                *c *= e;
            }
        }
    }
    o
}

/// A phase-space function that can be evaluated on hyper-dual numbers.
pub trait GenericKernel {
    fn eval<D: DualNum<f64> + Copy>(&self, y: &[D; 7]) -> D;
}

/// `Zhat^beta g` for a word of at most three fields, computed exactly as the
/// mixed parameter derivative of `g` composed with the fields' flows.
pub fn iterated_lift<G: GenericKernel>(word: &[FieldId], g: &G, y: &Phase7) -> Result<f64> {
    if word.len() > 3 {
        return Err(Error::Invalid("words longer than three fields are not supported".into()));
    }
    type H = HyperHyperDual64;
    let mut p: [H; 7] = std::array::from_fn(|i| H::from_re(y[i]));
    let eps = [H::from_re(0.0).derivative1(), H::from_re(0.0).derivative2(), H::from_re(0.0).derivative3()];
    for (i, z) in word.iter().enumerate() {
        p = flow(*z, eps[i], &p);
    }
    let out = g.eval(&p);
    Ok(match word.len() {
        0 => out.re,
        1 => out.eps1,
        2 => out.eps1eps2,
        _ => out.eps1eps2eps3,
    })
}

/// All words of length at most `max_len` over the eleven fields.
pub fn words(max_len: usize) -> Vec<Vec<FieldId>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for w in &frontier {
            for z in FieldId::ALL {
                let mut n: Vec<FieldId> = w.clone();
                n.push(z);
                next.push(n);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Point helper used by the geometry-to-phase conversions.
pub fn spacetime_of(y: &Phase7) -> SpacetimePoint {
    let (t, x, _) = split(y);
    SpacetimePoint { t, x }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boost_on_z01_vanishes() {
        // Omegahat_{01}(t v^1 - x^1 v^0) = 0
        let y = phase_point(0.7, [1.2, -0.3, 0.4], [0.5, 0.1, -0.8]);
        let g = ScaledWeightKernel(WeightId::Z01);
        assert!(apply_lift(FieldId::Boost1, &g, &y).abs() < 1e-8);
    }

    #[test]
    fn boost2_on_z12() {
        let (t, x1) = (0.7, 1.2);
        let v = [0.5, 0.1, -0.8];
        let y = phase_point(t, [x1, -0.3, 0.4], v);
        let g = ScaledWeightKernel(WeightId::Z12);
        let want = x1 * v0_of(&Vector3::from(v)) - t * v[0];
        assert!((apply_lift(FieldId::Boost2, &g, &y) - want).abs() < 1e-8);
    }

    #[test]
    fn words_count() {
        assert_eq!(words(3).len(), 1 + 11 + 121 + 1331);
    }

    #[test]
    fn flow_generates_field() {
        struct Coord(usize);
        impl GenericKernel for Coord {
            fn eval<D: DualNum<f64> + Copy>(&self, y: &[D; 7]) -> D {
                y[self.0]
            }
        }
        let y = phase_point(0.3, [0.4, -1.0, 2.0], [0.2, 0.3, -0.4]);
        for z in FieldId::ALL {
            let c = Lifted(z).coeffs(&y);
            for a in 0..7 {
                let d = iterated_lift(&[z], &Coord(a), &y).unwrap();
                assert!((d - c[a]).abs() < 1e-12, "{z:?} {a}");
            }
        }
    }
}
