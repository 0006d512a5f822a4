use nalgebra::{Vector3, Vector4};
use proptest::prelude::*;
use vmnull::fields::yee::{lie_derivative_grid, CurrentGrid, Lattice, NodeField, TimeStencil, YeeGrid, B_OFFSETS, E_OFFSETS};
use vmnull::fields::*;
use vmnull::operators::{lie_derivative, FieldId, FieldKernel};

fn waves() -> PotentialWaves {
    PotentialWaves {
        modes: vec![
            (Vector4::new(0.7, 0.3, -0.5, 0.2), Vector4::new(0.2, 1.0, 0.4, -0.3), 0.3),
            (Vector4::new(-1.1, 0.6, 0.1, 0.8), Vector4::new(-0.5, 0.2, 0.9, 0.1), 1.7),
        ],
    }
}

#[test]
fn plane_wave_solves_vacuum_maxwell() {
    let w = PlaneWave::standard();
    for &(t, x) in &[(0.0, [0.1, 0.2, 0.3]), (1.3, [-2.0, 0.5, 4.0])] {
        let (a, b) = maxwell_residual(&w, &ZeroCurrent, t, &Vector3::from(x));
        assert!(a.norm() < 1e-14 && b.norm() < 1e-14);
    }
}

#[test]
fn pure_charge_source_matches_divergence() {
    let f = PureChargeField { q: 2.3 };
    // inside the transition region chi' != 0
    let x = Vector3::new(1.1, -0.7, 0.9);
    let t = x.norm() - 1.4;
    let (a, b) = maxwell_residual(&f, &f, t, &x);
    assert!(a.norm() < 1e-12, "{a:?}");
    assert!(b.norm() < 1e-12, "{b:?}");
    // and with finite-difference partials
    struct Fd(PureChargeField);
    impl FieldKernel for Fd {
        fn field(&self, t: f64, x: &Vector3<f64>) -> vmnull::geometry::TwoForm {
            self.0.field(t, x)
        }
    }
    let (a, _) = maxwell_residual(&Fd(f), &f, t, &x);
    assert!(a.norm() < 1e-7);
}

#[test]
fn pure_charge_vanishes_inside_cone() {
    let x = Vector3::new(0.4, 0.0, 0.0);
    assert_eq!(pure_charge_field(1.0, 2.0, &x).unwrap().e.norm(), 0.0);
    assert!(pure_charge_field(1.0, 0.0, &Vector3::zeros()).is_err());
    assert!(pure_charge_source(1.0, 0.0, &Vector3::zeros()).is_err());
}

#[test]
fn null_maxwell_on_pure_charge_and_waves() {
    let f = PureChargeField { q: 1.3 };
    let x = Vector3::new(1.0, 2.0, -0.5);
    let t = x.norm() - 1.5;
    let r = null_maxwell_residual(&f, &f, t, &x, 1e-4).unwrap();
    assert!(r.max_abs() < 1e-6, "{r:?}");
    let w = waves();
    for &(t, x) in &[(0.2, [1.0, 0.5, -0.3]), (-0.7, [0.3, -1.5, 2.1])] {
        let r = null_maxwell_residual(&w, &w, t, &Vector3::from(x), 1e-4).unwrap();
        assert!(r.max_abs() < 1e-6, "{r:?}");
    }
}

#[test]
fn null_maxwell_rejects_origin() {
    assert!(null_maxwell_residual(&PlaneWave::standard(), &ZeroCurrent, 0.0, &Vector3::zeros(), 1e-4).is_err());
}

#[test]
fn divergence_of_t_is_lorentz_force() {
    let w = waves();
    for &(t, x) in &[(0.2, [1.0, 0.5, -0.3]), (-0.7, [0.3, -1.5, 2.1])] {
        assert!(divergence_t_residual(&w, &w, t, &Vector3::from(x)).norm() < 1e-12);
    }
    let f = PureChargeField { q: -0.8 };
    let x = Vector3::new(0.5, 1.0, 1.5);
    assert!(divergence_t_residual(&f, &f, x.norm() - 1.3, &x).norm() < 1e-12);
}

#[test]
fn split_recovers_charge() {
    let q = 0.9;
    struct Sum(PureChargeField, PlaneWave);
    impl FieldKernel for Sum {
        fn field(&self, t: f64, x: &Vector3<f64>) -> vmnull::geometry::TwoForm {
            self.0.field(t, x) + self.1.field(t, x)
        }
    }
    let s = split(Sum(PureChargeField { q }, PlaneWave::standard()), q);
    assert!((field_charge(&s.pure, 0.0, 3.0) - q).abs() < 1e-12);
    assert!(field_charge(&s.chargeless, 0.0, 3.0).abs() < 1e-10);
}

#[test]
fn spherical_pulse_is_a_vacuum_solution() {
    let p = SphericalPulse { amplitude: 1.0, center: Vector3::new(0.1, -0.05, 0.07), shell: 3.0, width: 1.0 };
    for &(t, x) in &[(0.3, [2.0, 1.0, 0.5]), (0.8, [-1.2, 0.4, 1.7])] {
        let (a, b) = maxwell_residual(&p, &ZeroCurrent, t, &Vector3::from(x));
        assert!(a.norm() < 1e-6 && b.norm() < 1e-6, "{a:?} {b:?}");
    }
}

fn plane_wave_error(n: usize, steps_per_unit: usize, t_end: f64) -> f64 {
    let wave = PlaneWave {
        amplitude: 1.0,
        direction: Vector3::new(1.0, 1.0, 0.0).normalize(),
        polarization: Vector3::new(0.0, 0.0, 1.0),
        wavenumber: 1.0,
        phase: 0.2,
    };
    let lat = Lattice::new(n, 4.0).unwrap();
    let mut g = YeeGrid::from_kernel(lat, &wave, 0.0);
    let steps = (t_end * steps_per_unit as f64).round() as usize;
    let dt = t_end / steps as f64;
    let j = CurrentGrid::zeros(lat);
    let bc = |t: f64, x: &Vector3<f64>| wave.field(t, x).e;
    for _ in 0..steps {
        g.step_driven(&j, dt, Some(&bc)).unwrap();
    }
    let exact = YeeGrid::from_kernel(lat, &wave, g.t);
    let mut err = 0.0;
    for c in 0..3 {
        for (a, b) in g.e[c].iter().zip(&exact.e[c]).chain(g.b[c].iter().zip(&exact.b[c])) {
            err += (a - b).powi(2);
        }
    }
    (err * lat.h.powi(3)).sqrt()
}

#[test]
fn yee_plane_wave_converges_at_second_order() {
    let e1 = plane_wave_error(16, 8, 2.0);
    let e2 = plane_wave_error(32, 16, 2.0);
    let ratio = e1 / e2;
    assert!((ratio - 4.0).abs() < 1.0, "ratio {ratio} ({e1} -> {e2})");
}

#[test]
fn yee_preserves_div_b_and_energy() {
    let p = SphericalPulse { amplitude: 1.0, center: Vector3::new(0.013, -0.021, 0.017), shell: 2.0, width: 1.5 };
    let lat = Lattice::new(24, 5.0).unwrap();
    let mut g = YeeGrid::from_potential(lat, &|t, x| p.potential(t, x), 0.0);
    assert!(g.max_div_b() < 1e-13);
    let e0 = g.energy();
    let dt = 0.25 * g.cfl_limit();
    for _ in 0..200 {
        g.step_vacuum(dt).unwrap();
    }
    assert!(g.max_div_b() < 1e-12);
    assert!(((g.energy() - e0) / e0).abs() < 1e-2, "{} {}", g.energy(), e0);
}

#[test]
fn potential_sampling_converges_to_the_field() {
    let p = SphericalPulse { amplitude: 1.0, center: Vector3::zeros(), shell: 2.0, width: 1.5 };
    let err = |n: usize| {
        let lat = Lattice::new(n, 5.0).unwrap();
        let a = YeeGrid::from_potential(lat, &|t, x| p.potential(t, x), 0.3);
        let b = YeeGrid::from_kernel(lat, &p, 0.3);
        // the profile is only C^3 at the edge of its support, so compare in L^2
        let mut sq = 0.0;
        for c in 0..3 {
            lat.for_each(B_OFFSETS[c], |q| {
                let i = lat.idx(q[0], q[1], q[2]);
                sq += (a.b[c][i] - b.b[c][i]).powi(2);
            });
            lat.for_each(E_OFFSETS[c], |q| {
                let i = lat.idx(q[0], q[1], q[2]);
                assert!((a.e[c][i] - b.e[c][i]).abs() < 1e-12);
            });
        }
        (sq * lat.h.powi(3)).sqrt()
    };
    let ratio = err(24) / err(48);
    assert!((ratio - 4.0).abs() < 1.0, "{ratio}");
}

#[test]
fn poisson_gives_discrete_gauss_law() {
    let lat = Lattice::new(16, 2.0).unwrap();
    let mut rho = vec![0.0; lat.len()];
    rho[lat.idx(8, 8, 8)] = 1.0;
    rho[lat.idx(6, 9, 8)] = -0.4;
    let mut g = YeeGrid::zeros(lat, 0.0);
    g.set_electrostatic(&rho, 1e-12).unwrap();
    assert!(g.gauss_residual(&rho) < 1e-9);
}

#[test]
fn grid_lie_derivative_matches_analytic() {
    let lat = Lattice::new(20, 2.0).unwrap();
    let w = PlaneWave { amplitude: 1.0, direction: Vector3::new(0.6, 0.8, 0.0), polarization: Vector3::z(), wavenumber: 0.7, phase: 0.1 };
    let dt = 0.01;
    let prev = NodeField::from_kernel(lat, &w, 1.0 - dt);
    let cur = NodeField::from_kernel(lat, &w, 1.0);
    let next = NodeField::from_kernel(lat, &w, 1.0 + dt);
    let st = TimeStencil { prev: &prev, cur: &cur, next: Some(&next) };
    for z in [FieldId::Dt, FieldId::Boost2, FieldId::Rot12, FieldId::Scaling] {
        let l = lie_derivative_grid(z, &st).unwrap();
        let x = cur.position(13, 7, 10);
        let want = lie_derivative(z, &w, 1.0, &x);
        let got = l.at(13, 7, 10);
        assert!((got - want).norm_sq().sqrt() < 5e-3, "{z:?}: {got:?} vs {want:?}");
    }
}

proptest! {
    #[test]
    fn potential_waves_solve_maxwell(t in -2.0..2.0f64, x in prop::array::uniform3(-3.0..3.0f64)) {
        let w = waves();
        let (a, b) = maxwell_residual(&w, &w, t, &Vector3::from(x));
        prop_assert!(a.norm() < 1e-12 && b.norm() < 1e-12);
    }

    #[test]
    fn chi_is_monotone_and_bounded(s in -3.0..0.0f64, ds in 0.0..0.5f64) {
        let a = CutoffChi::value(s);
        let b = CutoffChi::value(s + ds);
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(b <= a + 1e-15);
        // derivative against a central difference
        let h = 1e-6;
        let fd = (CutoffChi::value(s + h) - CutoffChi::value(s - h)) / (2.0 * h);
        prop_assert!((fd - CutoffChi::d1(s)).abs() < 1e-5);
        let fd2 = (CutoffChi::d1(s + h) - CutoffChi::d1(s - h)) / (2.0 * h);
        prop_assert!((fd2 - CutoffChi::d2(s)).abs() < 1e-4);
    }
}
