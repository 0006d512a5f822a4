use std::f64::consts::PI;

use nalgebra::Vector3;
use proptest::prelude::*;
use vmnull::diagnostics::*;
use vmnull::dynamics::{sample_initial, GaussianData};
use vmnull::fields::yee::{Lattice, NodeField, YeeGrid};
use vmnull::fields::{CutoffChi, PureChargeField, SphericalPulse};
use vmnull::operators::ZeroField;

fn series(ts: &[f64], q: impl Fn(f64) -> f64) -> DecaySeries {
    let mut s = DecaySeries::new();
    for &t in ts {
        s.push(t, q(t));
    }
    s
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

#[test]
fn slope_of_exact_power_law() {
    let ts = linspace(5.0, 100.0, 20);
    let fit = decay_slope(&series(&ts, |t| 0.3 * (1.0 + t).powi(-3))).unwrap();
    assert!((fit.slope + 3.0).abs() < 1e-12);
    assert!(fit.stderr < 1e-12 && fit.residual < 1e-12);
    let flat = decay_slope(&series(&ts, |_| 2.5)).unwrap();
    assert!(flat.slope.abs() < 1e-14);
}

#[test]
fn slope_with_log_correction() {
    // the least-squares slope is a positively weighted average of the local
    // exponent -2 + (1 + t) / ((3 + t) log(3 + t)), which lies in
    // [-1.79, -1.64] on [5, 100]
    let ts = linspace(5.0, 100.0, 20);
    let local = |t: f64| -2.0 + (1.0 + t) / ((3.0 + t) * (3.0 + t).ln());
    let (lo, hi) = (local(100.0), local(5.0));
    let fit = decay_slope(&series(&ts, |t| (1.0 + t).powi(-2) * (3.0 + t).ln())).unwrap();
    assert!(fit.slope > lo && fit.slope < hi, "{} not in [{lo}, {hi}]", fit.slope);
}

#[test]
fn slope_rejects_bad_series() {
    let ts = linspace(5.0, 10.0, 4);
    assert!(decay_slope(&series(&ts, |t| t)).is_err());
    let ts = linspace(5.0, 10.0, 6);
    assert!(decay_slope(&series(&ts, |t| if t > 7.0 { 0.0 } else { 1.0 })).is_err());
    assert!(decay_slope(&series(&ts, |_| -1.0)).is_err());
}

#[test]
fn pure_charge_probe_has_exact_slope() {
    // nodes sit on even integers, so the ray r = t + 2 hits them for even t
    let lat = Lattice::new(48, 48.0).unwrap();
    let ray = Ray { u: Some(-2.0), direction: Vector3::x() };
    let snaps: Vec<NodeField> = (3..=20).map(|k| NodeField::from_kernel(lat, &PureChargeField { q: 1.7 }, 2.0 * k as f64)).collect();
    let mut s = field_decay_probe(&snaps, &ray, NullComponent::Rho).unwrap();
    s.offset = 2.0;
    let fit = decay_slope(&s).unwrap();
    assert!((fit.slope + 2.0).abs() < 1e-10, "{fit:?}");
    // the other components vanish
    let a = field_decay_probe(&snaps, &ray, NullComponent::Alpha).unwrap();
    assert!(a.q.iter().all(|q| q.abs() < 1e-12));
    assert!(decay_slope(&a).is_err());
}

#[test]
fn probe_leaving_the_grid_is_an_error() {
    let lat = Lattice::new(8, 4.0).unwrap();
    let n = NodeField::from_kernel(lat, &ZeroField, 6.0);
    let ray = Ray { u: Some(0.0), direction: Vector3::y() };
    assert!(probe(&n, &ray, NullComponent::Sigma).is_err());
    let origin = Ray { u: None, direction: Vector3::y() };
    assert_eq!(probe(&n, &origin, NullComponent::Sigma).unwrap(), 0.0);
}

fn gl(n: usize) -> Vec<(f64, f64)> {
    gauss_quad::GaussLegendre::new(n.try_into().unwrap()).iter().map(|(a, b)| (*a, *b)).collect()
}

#[test]
fn zero_field_has_zero_energy() {
    let lat = Lattice::new(12, 3.0).unwrap();
    let n = NodeField::from_kernel(lat, &ZeroField, 0.0);
    let mut tr = MaxwellEnergyTracker::new(lat.h, 3.0).unwrap();
    tr.record(&n, 0.1).unwrap();
    let e = tr.energy(&n).unwrap();
    for k in EnergyKind::ALL {
        assert_eq!(e.get(k), 0.0);
    }
    assert!(EnergyKind::parse("E7").is_err());
}

#[test]
fn pure_charge_exterior_energy_matches_radial_integral() {
    let (q, t) = (1.3, 1.0);
    let lat = Lattice::new(64, 8.0).unwrap();
    let radius = lat.l - lat.h;
    let n = NodeField::from_kernel(lat, &PureChargeField { q }, t);
    let grid = maxwell_slice_energy(&n, EnergyKind::ScalingExterior, radius).unwrap();
    // only rho = q chi / (4 pi r^2) survives
    let f = |r: f64| {
        let rho = q * CutoffChi::value(t - r) / (4.0 * PI * r * r);
        (1.0 + (t + r).powi(2)).sqrt() * rho * rho * 4.0 * PI * r * r
    };
    let exact: f64 = gl(200).iter().map(|(x, w)| 0.5 * (radius - t) * w * f(t + 0.5 * (radius - t) * (1.0 + x))).sum();
    assert!(((grid - exact) / exact).abs() < 2e-2, "{grid} vs {exact}");
}

#[test]
fn pure_charge_cone_integral_matches_closed_form() {
    // along C_u the cutoff is frozen at chi(u), so
    // int_{C_u} rho^2 = sqrt(2) q^2 chi(u)^2 (1/|u| - 1/(t - u)) / (4 pi)
    let q = 1.0;
    let lat = Lattice::new(48, 8.0).unwrap();
    let dt = 0.5 * lat.h;
    let steps = 24;
    let mut tr = MaxwellEnergyTracker::new(lat.h, lat.l - lat.h).unwrap();
    let mut last = None;
    for k in 0..steps {
        let n = NodeField::from_kernel(lat, &PureChargeField { q }, k as f64 * dt);
        tr.record(&n, dt).unwrap();
        last = Some(n);
    }
    let t_end = steps as f64 * dt;
    let bin = tr.bin;
    let u_lo = (-3.0 / bin).floor() * bin;
    let closed = |u: f64| 2f64.sqrt() * q * q * CutoffChi::value(u).powi(2) * (1.0 / -u - 1.0 / (t_end - u)) / (4.0 * PI);
    let mean: f64 = gl(20).iter().map(|(x, w)| 0.5 * w * closed(u_lo + 0.5 * bin * (1.0 + x))).sum();
    let got = tr.cone_integral(EnergyKind::Standard, u_lo + 0.5 * bin).unwrap();
    assert!(((got - mean) / mean).abs() < 0.1, "{got} vs {mean}");
    let e = tr.energy(last.as_ref().unwrap()).unwrap();
    assert!(e.standard > 0.0 && e.scaling_interior >= 0.0 && e.scaling_exterior > 0.0);
}

#[test]
fn vacuum_pulse_satisfies_energy_inequality() {
    let p = SphericalPulse { amplitude: 1.0, center: Vector3::new(0.013, -0.021, 0.017), shell: 2.0, width: 1.5 };
    let lat = Lattice::new(64, 8.0).unwrap();
    let mut g = YeeGrid::from_kernel(lat, &p, 0.0);
    let dt = 0.5 * g.cfl_limit();
    let mut tr = MaxwellEnergyTracker::new(lat.h, lat.l - lat.h).unwrap();
    let mut hist = Vec::new();
    let slice0 = maxwell_slice_energy(&g.node_field(), EnergyKind::Standard, lat.l - lat.h).unwrap();
    for _ in 0..20 {
        let n = g.node_field();
        tr.record(&n, dt).unwrap();
        hist.push(EnergyRecord { t: g.t, energy: tr.energy(&n).unwrap().standard, source: 0.0 });
        let slice = maxwell_slice_energy(&n, EnergyKind::Standard, lat.l - lat.h).unwrap();
        assert!(((slice - slice0) / slice0).abs() < 0.03, "{slice} vs {slice0}");
        g.step_vacuum(dt).unwrap();
    }
    let m = energy_inequality_check(&hist).unwrap();
    assert!(m.margin <= 0.0, "{m:?}");
    assert!(energy_inequality_check(&[]).is_err());
    let zero = [EnergyRecord { t: 0.0, energy: 0.0, source: 0.0 }];
    assert_eq!(energy_inequality_check(&zero).unwrap().margin, 0.0);
}

#[test]
fn free_vlasov_energy_inequality() {
    let f0 = GaussianData::isotropic(1.0, 1.0, 0.5);
    let mut e = sample_initial(&f0, 4000, 11, vec![]).unwrap();
    let l10 = e.l1_norm();
    for step in 1..=10 {
        let t = step as f64;
        for p in e.particles.iter_mut() {
            let v0 = p.v0();
            p.x = p.x_init + p.v * (t / v0);
        }
        e.t = t;
        let ve = vlasov_energy(&e);
        assert_eq!(ve.l1, l10);
        assert!(vlasov_energy_margin(&ve, l10) <= 0.0);
        // brute-force supremum on a u lattice cannot exceed the sweep
        let brute = (0..400).map(|k| cone_flux(&e, -8.0 + 0.05 * k as f64)).fold(0.0, f64::max);
        assert!(brute <= ve.cone_sup + 1e-12);
        assert!((cone_flux(&e, ve.u_star) - ve.cone_sup).abs() < 1e-12);
    }
    for p in e.particles.iter_mut() {
        p.w = 0.0;
    }
    assert_eq!(vlasov_energy(&e).cone_sup, 0.0);
}

fn direct_velocity_integral(f0: &GaussianData, t: f64, x: &Vector3<f64>) -> f64 {
    let nodes = gl(48);
    let k = 8.0;
    let mut total = 0.0;
    for (a, wa) in &nodes {
        for (b, wb) in &nodes {
            for (c, wc) in &nodes {
                let v = Vector3::new(
                    f0.mean_v[0] + k * f0.sigma_v[0] * a,
                    f0.mean_v[1] + k * f0.sigma_v[1] * b,
                    f0.mean_v[2] + k * f0.sigma_v[2] * c,
                );
                let v0 = (1.0 + v.norm_squared()).sqrt();
                total += wa * wb * wc * f0.density(&(x - v * (t / v0)), &v);
            }
        }
    }
    total * k.powi(3) * f0.sigma_v.iter().product::<f64>()
}

#[test]
fn velocity_integral_routes_agree() {
    let f0 = GaussianData { amplitude: 2.0, center: [0.2, 0.0, -0.1], sigma_x: [1.0, 0.8, 1.2], mean_v: [0.3, 0.0, 0.1], sigma_v: [0.4, 0.5, 0.3] };
    // t = 0: the spatial marginal
    let x = Vector3::new(0.5, -0.3, 0.4);
    let marg: f64 = (0..3).map(|a| (-(x[a] - f0.center[a]).powi(2) / (2.0 * f0.sigma_x[a].powi(2))).exp() / ((2.0 * PI).sqrt() * f0.sigma_x[a])).product();
    assert!((ks_lhs(&f0, 0.0, &x).unwrap() - 2.0 * marg).abs() < 1e-10);
    for (t, x) in [(0.7, Vector3::new(0.5, -0.3, 0.4)), (2.0, Vector3::new(1.0, 0.5, 0.0))] {
        let w = ks_lhs(&f0, t, &x).unwrap();
        let d = direct_velocity_integral(&f0, t, &x);
        assert!(((w - d) / d).abs() < 1e-6, "{w} vs {d}");
    }
}

#[test]
fn ks_ratio_edge_cases() {
    let zero = GaussianData::isotropic(0.0, 1.0, 0.5);
    assert_eq!(ks_lhs(&zero, 3.0, &Vector3::zeros()).unwrap(), 0.0);
    assert_eq!(ks_rhs(&zero, 100, 1).unwrap(), 0.0);
    assert_eq!(ks_ratio(&zero, 3.0, &Vector3::zeros(), 0.0).unwrap(), 0.0);
    let f0 = GaussianData::isotropic(1.0, 1.0, 0.5);
    assert!(ks_ratio(&f0, 1.0, &Vector3::zeros(), 0.0).is_err());
}

#[test]
fn ks_rhs_is_reproducible_and_dominates_the_mass() {
    let f0 = GaussianData::isotropic(1.0, 1.0, 0.5);
    let a = ks_rhs(&f0, 400, 3).unwrap();
    assert_eq!(a, ks_rhs(&f0, 400, 3).unwrap());
    let b = ks_rhs(&f0, 400, 4).unwrap();
    assert!(a > 1.0 && ((a - b) / a).abs() < 0.1, "{a} {b}");
}

#[test]
fn lhs_at_origin_decays_like_t_cubed() {
    let f0 = GaussianData::isotropic(1.0, 1.0, 0.5);
    let ts = linspace(5.0, 40.0, 15);
    let s = series(&ts, |t| ks_lhs(&f0, t, &Vector3::zeros()).unwrap());
    let fit = decay_slope(&s).unwrap();
    assert!((fit.slope + 3.0).abs() < 0.3, "{fit:?}");
}

#[test]
fn exterior_inequality_holds() {
    let f0 = GaussianData { amplitude: 1.0, center: [0.0; 3], sigma_x: [1.0; 3], mean_v: [0.2, 0.0, 0.0], sigma_v: [0.3; 3] };
    for (t, x) in [(2.0, Vector3::new(2.0, 0.0, 0.0)), (5.0, Vector3::new(0.0, 5.0, 0.0)), (1.0, Vector3::new(8.0, 1.0, 0.0))] {
        let c = exterior_decay_check(&f0, t, &x).unwrap();
        assert!(c.margin <= 0.0, "{c:?}");
    }
    // v-support near zero far out: lots of slack
    let cold = GaussianData::isotropic(1.0, 1.0, 0.05);
    let c = exterior_decay_check(&cold, 1.0, &Vector3::new(3.0, 0.0, 0.0)).unwrap();
    assert!(c.ratio() < 0.5 * EXTERIOR_CONSTANT);
    assert!(exterior_decay_check(&f0, 3.0, &Vector3::new(1.0, 0.0, 0.0)).is_err());
}

#[test]
fn foliations_agree() {
    let g = |s: f64, y: &Vector3<f64>| (-s - y.norm()).exp();
    let c = foliation_check(&g, 2.0, 60.0).unwrap();
    assert!(c.relative_difference < 1e-6, "{c:?}");
    // closed form: (1 - e^{-t}) 8 pi
    let exact = (1.0 - (-2.0f64).exp()) * 8.0 * PI;
    assert!((c.slices - exact).abs() < 1e-8 * exact);
    let z = foliation_check(&|_, _| 0.0, 2.0, 10.0).unwrap();
    assert_eq!((z.slices, z.cones, z.relative_difference), (0.0, 0.0, 0.0));
    // support inside the cone
    let inner = |s: f64, y: &Vector3<f64>| {
        let r = y.norm();
        if s - r > 0.5 {
            (-1.0 / (s - r - 0.5)).exp() * (2.0 - s)
        } else {
            0.0
        }
    };
    let c = foliation_check(&inner, 2.0, 3.0).unwrap();
    assert!(c.slices > 0.0 && c.relative_difference < 1e-6, "{c:?}");
}

#[test]
fn integral_bound_is_stable() {
    for (a, b, m) in [(2.0, 2.0, 3.0), (3.0, 2.0, 1.0), (2.0, 3.0, 2.0)] {
        let cal: Vec<f64> = linspace(1.0, 10.0, 10).iter().map(|t| integral_bound_check(a, b, m, *t).unwrap().ratio).collect();
        let val: Vec<f64> = linspace(10.0, 100.0, 10).iter().map(|t| integral_bound_check(a, b, m, *t).unwrap().ratio).collect();
        let s = stability(&cal, &val).unwrap();
        assert!(s.relative.abs() < 0.15, "({a},{b},{m}): {s:?}");
        assert!(integral_bound_check(a, b, m, 0.0).unwrap().ratio.is_finite());
    }
    assert!(integral_bound_check(1.0, 1.5, 3.0, 1.0).is_err());
    assert!(integral_bound_check(3.0, 1.0, 2.0, 1.0).is_err());
}

#[test]
fn integral_matches_closed_form_at_t_zero() {
    // a = 2, b = 2, m = 1 at t = 0: int dr / (1 + r^2)^2 = pi / 4
    let r = integral_bound_check(2.0, 2.0, 1.0, 0.0).unwrap();
    assert!((r.integral - PI / 4.0).abs() < 1e-11);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cone_flux_is_bounded_by_its_supremum(seed in 0u64..1000, t in 0.5..6.0f64, u in -4.0..3.0f64) {
        let f0 = GaussianData::isotropic(1.0, 1.0, 0.5);
        let mut e = sample_initial(&f0, 300, seed, vec![]).unwrap();
        for p in e.particles.iter_mut() {
            let v0 = p.v0();
            p.x = p.x_init + p.v * (t / v0);
        }
        e.t = t;
        let f = cone_flux(&e, u);
        prop_assert!(f >= 0.0);
        prop_assert!(f <= vlasov_energy(&e).cone_sup + 1e-12);
    }

    #[test]
    fn slope_recovers_power(p in -4.0..0.0f64, c in 0.1..10.0f64) {
        let ts = linspace(5.0, 100.0, 20);
        let fit = decay_slope(&series(&ts, |t| c * (1.0 + t).powf(p))).unwrap();
        prop_assert!((fit.slope - p).abs() < 1e-10);
    }
}
