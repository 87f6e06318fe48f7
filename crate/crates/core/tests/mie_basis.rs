use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgcasimir::basis::*;
use sgcasimir::constants::C;
use sgcasimir::materials::MaterialModel;
use sgcasimir::mie::*;
use sgcasimir::specfun::Direction;

fn rel(a: Complex64, b: Complex64) -> f64 {
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).norm() / scale
    }
}

fn reg(l: usize, m: i64, pol: Multipole) -> SphericalMode {
    SphericalMode { l, m, pol, s: Regularity::Reg }
}

fn out(l: usize, m: i64, pol: Multipole) -> SphericalMode {
    SphericalMode { l, m, pol, s: Regularity::Out }
}

fn pw(kx: f64, ky: f64, p: Polarization, direction: Direction) -> PlaneWaveMode {
    PlaneWaveMode { kx, ky, n: 0, p, direction }
}

#[test]
fn vacuum_sphere_has_zero_amplitudes() {
    let s = SphereSpec::new(1e-6, MaterialModel::Vacuum).unwrap();
    let t = mie_coefficients(&s, 3e14, 20).unwrap();
    assert!(t.is_zero());
}

#[test]
fn sign_pattern_alternates() {
    let (re, rm) = mie_from_epsilon(2.0, 4.0, 10).unwrap();
    for l in 1..=10 {
        let s = if l % 2 == 1 { 1.0 } else { -1.0 };
        assert!(re[l - 1].to_f64() * s > 0.0, "E l={l}");
        assert!(rm[l - 1].to_f64() * s < 0.0, "M l={l}");
    }
}

#[test]
fn amplitude_tail_is_negligible() {
    for &x in &[0.5, 3.0, 10.0] {
        let lmax = (3.0 * x) as usize + 21;
        let (re, rm) = mie_from_epsilon(x, 6.0, lmax).unwrap();
        for r in [&re, &rm] {
            let ratio = (r[lmax - 1].abs() / r[0].abs()).to_f64();
            assert!(ratio < 1e-30, "x={x} ratio={ratio}");
        }
    }
}

#[test]
fn perfect_conductor_is_the_large_epsilon_limit() {
    let (pe, pm) = mie_from_epsilon(1.3, f64::INFINITY, 6).unwrap();
    let (ge, gm) = mie_from_epsilon(1.3, 1e14, 6).unwrap();
    for l in 0..6 {
        assert!((pe[l].to_f64() / ge[l].to_f64() - 1.0).abs() < 1e-6);
        assert!((pm[l].to_f64() / gm[l].to_f64() - 1.0).abs() < 1e-5);
    }
}

#[test]
fn regular_kernel_closed_forms() {
    let xi = 2e14;
    let q = xi / C;
    let (kx, ky) = (0.7 * q, -0.4 * q);
    let k = kx.hypot(ky);
    let phi = ky.atan2(kx);
    let sin_t = Complex64::new(0.0, -k / q);
    let cos_t = (q * q + k * k).sqrt() / q;
    let tm = pw(kx, ky, Polarization::TM, Direction::Up);
    let te = pw(kx, ky, Polarization::TE, Direction::Up);
    let v = kernel_reg(&reg(1, 0, Multipole::E), &tm, xi, f64::INFINITY).unwrap();
    assert!(rel(v, (6.0 * PI).sqrt() * Complex64::i() * sin_t) < 1e-13);
    for m in [-1i64, 1] {
        let v = kernel_reg(&reg(1, m, Multipole::E), &tm, xi, f64::INFINITY).unwrap();
        let e = m as f64 * (3.0 * PI).sqrt() * Complex64::i() * cos_t * Complex64::from_polar(1.0, -(m as f64) * phi);
        assert!(rel(v, e) < 1e-13, "m={m}");
        let v = kernel_reg(&reg(1, m, Multipole::E), &te, xi, f64::INFINITY).unwrap();
        let e = (3.0 * PI).sqrt() * Complex64::from_polar(1.0, -(m as f64) * phi);
        assert!(rel(v, e) < 1e-13, "te m={m}");
    }
    let v = kernel_reg(&reg(1, 0, Multipole::E), &te, xi, f64::INFINITY).unwrap();
    assert_eq!(v.norm(), 0.0);
}

#[test]
fn outgoing_kernel_closed_forms() {
    let xi = 2e14;
    let q = xi / C;
    let (kx, ky) = (0.3 * q, 1.1 * q);
    let k = kx.hypot(ky);
    let kap = (q * q + k * k).sqrt();
    let phi = ky.atan2(kx);
    let sin_t = Complex64::new(0.0, -k / q);
    let cos_t = -kap / q;
    let kkz = -q * kap;
    let tm = pw(kx, ky, Polarization::TM, Direction::Down);
    let te = pw(kx, ky, Polarization::TE, Direction::Down);
    let v = kernel_out(&tm, &out(1, 0, Multipole::E), xi, f64::INFINITY).unwrap();
    let e = (1.5 * PI).sqrt() * Complex64::new(0.0, -1.0) * sin_t / kkz;
    assert!(rel(v, e) < 1e-13);
    assert_eq!(kernel_out(&te, &out(1, 0, Multipole::E), xi, f64::INFINITY).unwrap().norm(), 0.0);
    for m in [-1i64, 1] {
        let az = Complex64::from_polar(1.0, m as f64 * phi);
        let v = kernel_out(&tm, &out(1, m, Multipole::E), xi, f64::INFINITY).unwrap();
        let e = m as f64 * (3.0 * PI).sqrt() * Complex64::new(0.0, -1.0) * cos_t / (2.0 * kkz) * az;
        assert!(rel(v, e) < 1e-13, "m={m}");
        let v = kernel_out(&te, &out(1, m, Multipole::E), xi, f64::INFINITY).unwrap();
        let e = (3.0 * PI).sqrt() / (2.0 * kkz) * az;
        assert!(rel(v, e) < 1e-13, "te m={m}");
    }
}

#[test]
fn kernel_duality() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let xi = 1.5e14;
    let q = xi / C;
    for _ in 0..50 {
        let l = rng.random_range(1..15usize);
        let m = rng.random_range(-(l as i64)..=l as i64);
        let kx = rng.random_range(-4.0..4.0) * q;
        let ky = rng.random_range(-4.0..4.0) * q;
        for dir in [Direction::Up, Direction::Down] {
            let a = kernel_reg(&reg(l, m, Multipole::E), &pw(kx, ky, Polarization::TE, dir), xi, 1.0).unwrap();
            let b = kernel_reg(&reg(l, m, Multipole::M), &pw(kx, ky, Polarization::TM, dir), xi, 1.0).unwrap();
            assert!(rel(a, Complex64::new(0.0, -1.0) * b) < 1e-14);
            let a = kernel_out(&pw(kx, ky, Polarization::TE, dir), &out(l, m, Multipole::E), xi, 1.0).unwrap();
            let b = kernel_out(&pw(kx, ky, Polarization::TM, dir), &out(l, m, Multipole::M), xi, 1.0).unwrap();
            assert!(rel(a, Complex64::i() * b) < 1e-14);
            // i(-1)^p ⟨ℓ,m,S(P),reg|k,S(p)⟩
            let a = kernel_reg(&reg(l, m, Multipole::E), &pw(kx, ky, Polarization::TM, dir), xi, 1.0).unwrap();
            let b = kernel_reg(&reg(l, m, Multipole::M), &pw(kx, ky, Polarization::TE, dir), xi, 1.0).unwrap();
            assert!(rel(a, Complex64::i() * b) < 1e-14);
        }
    }
}

#[test]
fn translation_factor_values() {
    let l = 1e-6;
    assert!((translation_factor(C / l, 0.0, 0.0, l) - (-1.0f64).exp()).abs() < 1e-15);
    let d = 2e-6;
    assert!((translation_factor(0.0, 2.0 * PI / d, 0.0, d) - (-2.0 * PI).exp()).abs() < 1e-15);
}

#[test]
fn sphere_matrix_reciprocity() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let sphere = SphereSpec::new(1e-6, MaterialModel::gold()).unwrap();
    let xi = 2.47e14;
    let q = xi / C;
    let mie = mie_coefficients(&sphere, xi, 12).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let k = (rng.random_range(-3.0..3.0) * q, rng.random_range(-3.0..3.0) * q);
        let kp = (rng.random_range(-3.0..3.0) * q, rng.random_range(-3.0..3.0) * q);
        let p = Polarization::BOTH[rng.random_range(0..2usize)];
        let pp = Polarization::BOTH[rng.random_range(0..2usize)];
        let dir = if rng.random_bool(0.5) { Direction::Up } else { Direction::Down };
        let lhs = planewave_matrix_from_table(&mie, xi, k, kp, p, pp, dir).unwrap() * kappa(xi, k.0, k.1);
        let rhs = planewave_matrix_from_table(&mie, xi, (-kp.0, -kp.1), (-k.0, -k.1), pp, p, dir).unwrap()
            * kappa(xi, kp.0, kp.1);
        let sign = if p == pp { 1.0 } else { -1.0 };
        worst = worst.max(rel(lhs, rhs * sign));
    }
    assert!(worst < 1e-10, "worst {worst}");
}

#[test]
fn sphere_matrix_atom_limit() {
    let radius = 1e-8;
    let eps = 3.0;
    let sphere = SphereSpec::new(radius, MaterialModel::Constant(eps)).unwrap();
    let xi = 1e-3 * C / radius;
    let q = xi / C;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let k = (rng.random_range(-2.0..2.0) * q, rng.random_range(-2.0..2.0) * q);
        let kp = (rng.random_range(-2.0..2.0) * q, rng.random_range(-2.0..2.0) * q);
        for p in Polarization::BOTH {
            for pp in Polarization::BOTH {
                let exact = sphere_planewave_matrix(&sphere, xi, k, kp, p, pp, Direction::Up, 4).unwrap();
                let atom = atom_reflection(radius, eps, xi, k, kp, p, pp, Direction::Up);
                if atom.norm() < 1e-6 * exact.norm() {
                    continue;
                }
                assert!(rel(exact, atom) < 5e-3, "{exact} vs {atom}");
            }
        }
    }
}

#[test]
fn oblique_pair_mixes_polarizations() {
    let sphere = SphereSpec::new(1e-6, MaterialModel::Constant(4.0)).unwrap();
    let xi = 3e14;
    let q = xi / C;
    let v = sphere_planewave_matrix(&sphere, xi, (0.4 * q, 0.9 * q), (1.2 * q, -0.3 * q), Polarization::TE, Polarization::TM, Direction::Up, 10)
        .unwrap();
    assert!(v.norm() > 0.0);
}
