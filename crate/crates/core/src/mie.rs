//! Mie reflection amplitudes on the imaginary axis and the sphere's plane-wave matrix.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::basis::{kernels_out, kernels_reg, kappa, Multipole, Polarization};
use crate::constants::C;
use crate::materials::MaterialModel;
use crate::specfun::{i_half, i_ratios, k_half, k_ratios, Direction, ScaledReal};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SphereSpec {
    pub radius: f64,
    pub material: MaterialModel,
}

impl SphereSpec {
    pub fn new(radius: f64, material: MaterialModel) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidArgument(format!("sphere radius must be positive, got {radius}")));
        }
        Ok(SphereSpec { radius, material })
    }
}

/// `r_ℓE`, `r_ℓM` for ℓ = 1..=lmax; stored scaled since they grow like e^{2x}.
#[derive(Clone, Debug, PartialEq)]
pub struct MieTable {
    pub xi: f64,
    pub x: f64,
    pub epsilon: f64,
    pub r_e: Vec<ScaledReal>,
    pub r_m: Vec<ScaledReal>,
}

impl MieTable {
    pub fn lmax(&self) -> usize {
        self.r_e.len()
    }

    pub fn scaled(&self, l: usize, pol: Multipole) -> ScaledReal {
        match pol {
            Multipole::E => self.r_e[l - 1],
            Multipole::M => self.r_m[l - 1],
        }
    }

    pub fn get(&self, l: usize, pol: Multipole) -> f64 {
        self.scaled(l, pol).to_f64()
    }

    pub fn is_zero(&self) -> bool {
        self.r_e.iter().chain(&self.r_m).all(|r| r.is_zero())
    }
}

/// Mie amplitudes for a sphere of the given permittivity at size parameter `x`.
pub fn mie_from_epsilon(x: f64, epsilon: f64, lmax: usize) -> Result<(Vec<ScaledReal>, Vec<ScaledReal>)> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::InvalidArgument(format!("size parameter must be positive, got {x}")));
    }
    if lmax < 1 {
        return Err(Error::InvalidArgument("lmax must be at least 1".into()));
    }
    if epsilon == 1.0 {
        return Ok((vec![ScaledReal::ZERO; lmax], vec![ScaledReal::ZERO; lmax]));
    }
    let hx = i_ratios(lmax, x);
    let kr = k_ratios(lmax, x);
    let perfect = epsilon.is_infinite();
    let hn = if perfect { Vec::new() } else { i_ratios(lmax, epsilon.sqrt() * x) };
    let nx = epsilon.sqrt() * x;

    // I_{ℓ+1/2}(x) / K_{ℓ+1/2}(x), built up from ℓ = 0
    let mut ratio = i_half(x) / k_half(x);
    let mut r_e = Vec::with_capacity(lmax);
    let mut r_m = Vec::with_capacity(lmax);
    for l in 1..=lmax {
        ratio = ratio * (hx[l - 1] / kr[l - 1]);
        let lf = l as f64;
        let ux = x * hx[l];
        let wx = x * kr[l];
        let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
        let pref = ratio * (sign * PI / 2.0);
        let (fe, fm) = if perfect {
            ((lf + 1.0 + ux) / (lf + 1.0 - wx), 1.0)
        } else {
            let un = nx * hn[l];
            let fe = (epsilon * (lf + 1.0 + ux) - (lf + 1.0 + un)) / (epsilon * (lf + 1.0 - wx) - (lf + 1.0 + un));
            let fm = (ux - un) / (-wx - un);
            (fe, fm)
        };
        r_e.push(pref * fe);
        r_m.push(pref * fm);
    }
    Ok((r_e, r_m))
}

/// Mie reflection amplitudes `r_ℓE(iξ)`, `r_ℓM(iξ)` for ℓ = 1..=lmax.
pub fn mie_coefficients(sphere: &SphereSpec, xi: f64, lmax: usize) -> Result<MieTable> {
    if !(xi > 0.0) {
        return Err(Error::InvalidArgument(format!("xi must be positive, got {xi}")));
    }
    let x = xi * sphere.radius / C;
    let epsilon = sphere.material.permittivity(xi)?;
    let (r_e, r_m) = mie_from_epsilon(x, epsilon, lmax)?;
    Ok(MieTable { xi, x, epsilon, r_e, r_m })
}

/// `⟨k,p|R_S^φ|k′,p′⟩` as the truncated multipole sum over (ℓ, m, P).
#[allow(clippy::too_many_arguments)]
pub fn sphere_planewave_matrix(
    sphere: &SphereSpec,
    xi: f64,
    k: (f64, f64),
    k_prime: (f64, f64),
    p: Polarization,
    p_prime: Polarization,
    direction: Direction,
    lmax: usize,
) -> Result<Complex64> {
    let mie = mie_coefficients(sphere, xi, lmax)?;
    planewave_matrix_from_table(&mie, xi, k, k_prime, p, p_prime, direction)
}

/// Same as [`sphere_planewave_matrix`] for precomputed Mie amplitudes.
pub fn planewave_matrix_from_table(
    mie: &MieTable,
    xi: f64,
    k: (f64, f64),
    k_prime: (f64, f64),
    p: Polarization,
    p_prime: Polarization,
    direction: Direction,
) -> Result<Complex64> {
    let lmax = mie.lmax();
    let opposite = match direction {
        Direction::Up => Direction::Down,
        Direction::Down => Direction::Up,
    };
    let out = kernels_out(lmax, xi, k.0, k.1, direction)?;
    let reg = kernels_reg(lmax, xi, k_prime.0, k_prime.1, opposite)?;
    let mut acc = Complex64::new(0.0, 0.0);
    for l in 1..=lmax {
        for pol in Multipole::BOTH {
            let r = mie.scaled(l, pol);
            if r.is_zero() {
                continue;
            }
            for m in -(l as i64)..=l as i64 {
                let a = out.raw(p, pol, l, m);
                let b = reg.raw(p_prime, pol, l, m);
                let mag = (a.magnitude * b.magnitude * r).to_f64();
                let phase = a.phase.times(b.phase).to_complex() * out.azimuthal(m) * reg.azimuthal(m);
                acc += phase * mag;
            }
        }
    }
    Ok(acc)
}

/// Cartesian polarization vector `ε̂_p^φ(k)` on the imaginary axis.
pub fn polarization_vector(xi: f64, kx: f64, ky: f64, p: Polarization, direction: Direction) -> [Complex64; 3] {
    let q = xi / C;
    let k = kx.hypot(ky);
    let (cphi, sphi) = if k == 0.0 { (1.0, 0.0) } else { (kx / k, ky / k) };
    match p {
        Polarization::TE => [Complex64::new(-sphi, 0.0), Complex64::new(cphi, 0.0), Complex64::new(0.0, 0.0)],
        Polarization::TM => {
            let cos_t = direction.sign() * kappa(xi, kx, ky) / q;
            let sin_t = Complex64::new(0.0, -k / q);
            [Complex64::new(cos_t * cphi, 0.0), Complex64::new(cos_t * sphi, 0.0), -sin_t]
        }
    }
}

/// Dipolar reflection matrix `(2πiK²/k_z) α/(4πε₀) ε̂_p^φ(k)·ε̂_{p′}^{-φ}(k′)` of a
/// small sphere with polarizability `R³(ε−1)/(ε+2)`.
pub fn atom_reflection(
    radius: f64,
    epsilon: f64,
    xi: f64,
    k: (f64, f64),
    k_prime: (f64, f64),
    p: Polarization,
    p_prime: Polarization,
    direction: Direction,
) -> Complex64 {
    let q = xi / C;
    let big_k = Complex64::new(0.0, q);
    let kz = Complex64::new(0.0, kappa(xi, k.0, k.1));
    let alpha = radius.powi(3) * (epsilon - 1.0) / (epsilon + 2.0);
    let opposite = match direction {
        Direction::Up => Direction::Down,
        Direction::Down => Direction::Up,
    };
    let e1 = polarization_vector(xi, k.0, k.1, p, direction);
    let e2 = polarization_vector(xi, k_prime.0, k_prime.1, p_prime, opposite);
    let dot: Complex64 = e1.iter().zip(&e2).map(|(a, b)| a * b).sum();
    Complex64::new(0.0, 2.0 * PI) * big_k * big_k / kz * alpha * dot
}
