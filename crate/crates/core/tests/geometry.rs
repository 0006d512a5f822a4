use std::f64::consts::PI;

use nalgebra::{Vector3, Vector4};
use proptest::prelude::*;
use vmnull::fields::pure_charge_field;
use vmnull::geometry::*;

#[test]
fn null_coordinates() {
    let c = null_coords(&SpacetimePoint::new(0.0, [0.0; 3])).unwrap();
    assert_eq!((c.u, c.ubar, c.tau.plus, c.tau.minus), (0.0, 0.0, 1.0, 1.0));
    let c = null_coords(&SpacetimePoint::new(3.0, [0.0, 1.0, 0.0])).unwrap();
    assert_eq!((c.u, c.ubar), (2.0, 4.0));
    assert_eq!((c.tau.plus, c.tau.minus), (17f64.sqrt(), 5f64.sqrt()));
    let c = null_coords(&SpacetimePoint::new(0.0, [0.0, 0.0, 2.5])).unwrap();
    assert_eq!(c.tau.plus, c.tau.minus);
}

#[test]
fn frame_is_scale_invariant() {
    let x = Vector3::new(0.3, -1.2, 0.8);
    let a = spherical_frame(&x).unwrap();
    let b = spherical_frame(&(x * 2.0)).unwrap();
    assert!((a.e1 - b.e1).norm() < 1e-15 && (a.e2 - b.e2).norm() < 1e-15);
    assert!((a.e1.cross(&a.e2) - a.omega).norm() < 1e-15);
}

#[test]
fn decomposition_examples() {
    let x = Vector3::new(1.5, 0.0, 0.0);
    let fr = spherical_frame(&x).unwrap();
    let p = SpacetimePoint { t: 0.0, x };
    let d = null_decompose(&TwoForm::new([1.0, 0.0, 0.0], [0.0; 3]), &p, &fr).unwrap();
    assert_eq!((d.rho, d.sigma, d.alpha, d.alpha_bar), (-1.0, 0.0, [0.0; 2], [0.0; 2]));
    assert_eq!(null_decompose(&TwoForm::zero(), &p, &fr).unwrap(), NullDecomposition::default());
    // pure charge with chi = 1
    let q = 2.0;
    let x = Vector3::new(2.0, -1.0, 3.0);
    let r = x.norm();
    let f = pure_charge_field(q, r - 3.0, &x).unwrap();
    let d = null_decompose_in(&f, &spherical_frame(&x).unwrap());
    assert!((d.rho + q / (4.0 * PI * r * r)).abs() < 1e-15);
    assert!(d.alpha_norm() < 1e-15 && d.alpha_bar_norm() < 1e-15 && d.sigma.abs() < 1e-15);
    // the energy density of that field
    let t00 = energy_momentum(&f)[(0, 0)];
    assert!((t00 - q * q / (32.0 * PI * PI * r.powi(4))).abs() < 1e-15);
    // a frame from another point is refused
    let other = spherical_frame(&Vector3::new(0.0, 1.0, 0.0)).unwrap();
    assert!(null_decompose(&f, &SpacetimePoint { t: 0.0, x }, &other).is_err());
}

#[test]
fn dual_examples() {
    let f = TwoForm::new([1.0, 0.0, 0.0], [0.0; 3]);
    let d = hodge_dual(&f).matrix();
    for mu in 0..4 {
        for nu in 0..4 {
            let want = match (mu, nu) {
                (2, 3) => -1.0,
                (3, 2) => 1.0,
                _ => 0.0,
            };
            assert_eq!(d[(mu, nu)], want);
        }
    }
    assert_eq!(hodge_dual(&TwoForm::zero()), TwoForm::zero());
    // the flipped orientation still squares to -1 but gets the components wrong
    assert!(double_dual_residual(&f, -1.0) < 1e-15);
    assert!(dual_components_residual(&f, -1.0) > 1.0);
}

#[test]
fn velocity_components_example() {
    let x = Vector3::new(1.0, 0.0, 0.0);
    let fr = spherical_frame(&x).unwrap();
    let v = MassShellVelocity::new([0.0, 1.0, 0.0]);
    let n = velocity_null(&v, &fr);
    assert!((n.l - 0.5f64.sqrt()).abs() < 1e-15 && (n.lbar - 0.5f64.sqrt()).abs() < 1e-15);
    assert!((4.0 * n.l * n.lbar - 2.0).abs() < 1e-15);
    let radial = velocity_null(&MassShellVelocity::new([0.7, 0.0, 0.0]), &fr);
    assert_eq!(radial.a, [0.0, 0.0]);
}

fn two_form() -> impl Strategy<Value = TwoForm> {
    (prop::array::uniform3(-5.0..5.0f64), prop::array::uniform3(-5.0..5.0f64)).prop_map(|(e, b)| TwoForm::new(e, b))
}

fn position() -> impl Strategy<Value = Vector3<f64>> {
    prop::array::uniform3(-10.0..10.0f64).prop_filter("away from the origin", |x| Vector3::from(*x).norm() > 1e-3).prop_map(Vector3::from)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn double_dual_is_minus_identity(f in two_form()) {
        prop_assert!(double_dual_residual(&f, 1.0) < 1e-14);
        prop_assert!(dual_components_residual(&f, 1.0) < 1e-14);
        let d = hodge_dual(&f).matrix();
        prop_assert!((d + d.transpose()).norm() == 0.0);
    }

    #[test]
    fn energy_momentum_is_symmetric_traceless(f in two_form(), x in position()) {
        let t = energy_momentum(&f);
        prop_assert!((t - t.transpose()).norm() < 1e-12);
        let tr = (eta() * t).trace();
        prop_assert!(tr.abs() < 1e-12 * f.norm_sq().max(1.0));
        let fr = spherical_frame(&x).unwrap();
        prop_assert!(energy_components_residual(&f, &fr) < 1e-13);
        prop_assert!((t[(0, 0)] - 0.5 * f.norm_sq()).abs() < 1e-12 * f.norm_sq().max(1.0));
    }

    #[test]
    fn decomposition_roundtrips(f in two_form(), x in position()) {
        let fr = spherical_frame(&x).unwrap();
        let d = null_decompose_in(&f, &fr);
        let back = d.to_two_form(&fr);
        prop_assert!((back - f).norm_sq().sqrt() < 1e-13 * (1.0 + f.norm_sq().sqrt()));
        // |E|^2 + |B|^2 as a quadratic form in the null components
        let q = d.rho * d.rho + d.sigma * d.sigma + 0.5 * (d.alpha_norm().powi(2) + d.alpha_bar_norm().powi(2));
        prop_assert!((q - f.norm_sq()).abs() < 1e-12 * f.norm_sq().max(1.0));
    }

    #[test]
    fn frame_rotation_covariance(f in two_form(), x in position(), th in 0.0..(2.0 * PI)) {
        let fr = spherical_frame(&x).unwrap();
        let (c, s) = (th.cos(), th.sin());
        let rot = SphericalFrame { omega: fr.omega, e1: fr.e1 * c + fr.e2 * s, e2: fr.e2 * c - fr.e1 * s };
        let a = null_decompose_in(&f, &fr);
        let b = null_decompose_in(&f, &rot);
        prop_assert!((a.rho - b.rho).abs() < 1e-12 && (a.sigma - b.sigma).abs() < 1e-12);
        prop_assert!((b.alpha[0] - (c * a.alpha[0] + s * a.alpha[1])).abs() < 1e-12);
        prop_assert!((b.alpha_bar[1] - (c * a.alpha_bar[1] - s * a.alpha_bar[0])).abs() < 1e-12);
    }

    #[test]
    fn frame_is_orthonormal(x in position()) {
        let fr = spherical_frame(&x).unwrap();
        prop_assert!((fr.e1.norm() - 1.0).abs() < 1e-14 && (fr.e2.norm() - 1.0).abs() < 1e-14);
        prop_assert!(fr.e1.dot(&fr.e2).abs() < 1e-14 && fr.e1.dot(&fr.omega).abs() < 1e-14);
    }

    #[test]
    fn velocity_identities(x in position(), v in prop::array::uniform3(-20.0..20.0f64), t in 0.01..20.0f64) {
        let v = MassShellVelocity::new(v);
        prop_assert!((v.v0().powi(2) - v.v.norm_squared() - 1.0).abs() < 1e-10 * v.v0().powi(2));
        prop_assert!(lagrange_residual(&x, &v).unwrap().abs() < 1e-12);
        let p = SpacetimePoint { t, x };
        prop_assert!(vlbar_residual(&p, &v).unwrap().abs() < 1e-12);
        let fr = spherical_frame(&x).unwrap();
        let n = velocity_null(&v, &fr);
        prop_assert!(4.0 * v.v0() * n.lbar >= 1.0 - 1e-9);
        let back = fr.l() * n.l + fr.lbar() * n.lbar + fr.e4(0) * n.a[0] + fr.e4(1) * n.a[1];
        prop_assert!((back - v.four()).norm() < 1e-10 * v.v0());
    }

    #[test]
    fn tau_ordering(t in 0.0..50.0f64, x in position()) {
        let p = SpacetimePoint { t, x };
        let w = tau_weights(&p);
        prop_assert!(w.plus >= w.minus && w.minus >= 1.0);
    }
}

#[test]
fn four_vector_helpers() {
    let v = MassShellVelocity::new([0.0, 0.0, 0.0]);
    assert_eq!(v.four(), Vector4::new(1.0, 0.0, 0.0, 0.0));
}
