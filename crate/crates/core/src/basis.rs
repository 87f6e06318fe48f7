//! Plane-wave ↔ spherical-wave projection kernels on the imaginary axis.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::constants::C;
use crate::specfun::{angular_factors, Direction, HyperbolicAngle, PhasedReal, Quadrant, ScaledReal};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarization {
    TE,
    TM,
}

impl Polarization {
    pub const BOTH: [Polarization; 2] = [Polarization::TE, Polarization::TM];

    /// 0 for TE, 1 for TM.
    pub fn index(self) -> usize {
        match self {
            Polarization::TE => 0,
            Polarization::TM => 1,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Polarization::TE => Polarization::TM,
            Polarization::TM => Polarization::TE,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Multipole {
    E,
    M,
}

impl Multipole {
    pub const BOTH: [Multipole; 2] = [Multipole::E, Multipole::M];

    /// 0 for E, 1 for M.
    pub fn index(self) -> usize {
        match self {
            Multipole::E => 0,
            Multipole::M => 1,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Multipole::E => Multipole::M,
            Multipole::M => Multipole::E,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Regularity {
    Reg,
    Out,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneWaveMode {
    pub kx: f64,
    pub ky: f64,
    pub n: i64,
    pub p: Polarization,
    pub direction: Direction,
}

impl PlaneWaveMode {
    /// `k_x + 2πn/D`; pass `f64::INFINITY` for a non-periodic problem.
    pub fn kx_n(&self, period: f64) -> f64 {
        if self.n == 0 {
            self.kx
        } else {
            self.kx + 2.0 * PI * self.n as f64 / period
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SphericalMode {
    pub l: usize,
    pub m: i64,
    pub pol: Multipole,
    pub s: Regularity,
}

/// Number of (ℓ, m) pairs with 1 ≤ ℓ ≤ lmax.
pub fn lm_count(lmax: usize) -> usize {
    lmax * lmax + 2 * lmax
}

/// Position of (ℓ, m) in the ℓ-major ordering.
pub fn lm_index(l: usize, m: i64) -> usize {
    (l * l) as usize - 1 + (m + l as i64) as usize
}

/// Inverse of [`lm_index`].
pub fn lm_from_index(j: usize) -> (usize, i64) {
    let l = ((j + 1) as f64).sqrt().floor() as usize;
    let l = if l * l > j + 1 { l - 1 } else { l };
    (l, j as i64 + 1 - (l * l) as i64 - l as i64)
}

/// `e^{-κL}` with `κ = sqrt(ξ²/c² + k_x² + k_y²)`.
pub fn translation_factor(xi: f64, kx_n: f64, ky: f64, length: f64) -> f64 {
    (-kappa(xi, kx_n, ky) * length).exp()
}

pub fn kappa(xi: f64, kx: f64, ky: f64) -> f64 {
    let q = xi / C;
    (q * q + kx * kx + ky * ky).sqrt()
}

/// Kernels for all (p, P, ℓ, m) at one wave vector, without the azimuthal factor.
///
/// The value at (p, P, ℓ, m) is `values[p·2NL + P·NL + j(ℓ,m)] · e^{∓imφ_k}`
/// with `-` for regular and `+` for outgoing kernels.
#[derive(Clone, Debug)]
pub struct KernelSet {
    pub lmax: usize,
    pub phi_k: f64,
    pub kind: Regularity,
    pub values: Vec<PhasedReal>,
}

impl KernelSet {
    pub fn raw(&self, p: Polarization, pol: Multipole, l: usize, m: i64) -> PhasedReal {
        let nl = lm_count(self.lmax);
        self.values[p.index() * 2 * nl + pol.index() * nl + lm_index(l, m)]
    }

    pub fn azimuthal(&self, m: i64) -> Complex64 {
        let sign = match self.kind {
            Regularity::Reg => -1.0,
            Regularity::Out => 1.0,
        };
        Complex64::from_polar(1.0, sign * m as f64 * self.phi_k)
    }

    pub fn get(&self, p: Polarization, pol: Multipole, l: usize, m: i64) -> Complex64 {
        self.raw(p, pol, l, m).to_complex() * self.azimuthal(m)
    }
}

fn fill(lmax: usize, angle: HyperbolicAngle, pref: [PhasedReal; 2]) -> Result<Vec<PhasedReal>> {
    let nl = lm_count(lmax);
    let mut values = vec![PhasedReal::ZERO; 4 * nl];
    for m in -(lmax as i64)..=lmax as i64 {
        let factors = angular_factors(lmax, m, angle)?;
        for af in factors {
            let l = af.l;
            let norm = ScaledReal::new(1.0 / ((l * (l + 1)) as f64).sqrt());
            let j = lm_index(l, m);
            for p in Polarization::BOTH {
                for pol in Multipole::BOTH {
                    let f = if p.index() == pol.index() { af.pi } else { af.tau };
                    let pre = pref[p.index()];
                    let v = PhasedReal::new(f.magnitude * pre.magnitude * norm, f.phase.times(pre.phase));
                    values[p.index() * 2 * nl + pol.index() * nl + j] = v;
                }
            }
        }
    }
    Ok(values)
}

/// `⟨ℓ,m,P,reg|k,p,φ⟩` for all modes, evaluated at `θ^φ_k`.
pub fn kernels_reg(lmax: usize, xi: f64, kx: f64, ky: f64, direction: Direction) -> Result<KernelSet> {
    check(lmax, xi)?;
    let angle = HyperbolicAngle::from_wavevector(xi, kx, ky, direction);
    // -4π i^{p-1}
    let four_pi = ScaledReal::new(4.0 * PI);
    let pref = [
        PhasedReal { magnitude: four_pi, phase: Quadrant::MinusOne },
        PhasedReal { magnitude: four_pi, phase: Quadrant::MinusI },
    ];
    let values = fill(lmax, angle, pref)?;
    Ok(KernelSet { lmax, phi_k: angle.phi_k, kind: Regularity::Reg, values })
}

/// `⟨k,p,φ|ℓ,m,P,out⟩` for all modes, evaluated at `θ^φ_k`.
pub fn kernels_out(lmax: usize, xi: f64, kx: f64, ky: f64, direction: Direction) -> Result<KernelSet> {
    check(lmax, xi)?;
    let angle = HyperbolicAngle::from_wavevector(xi, kx, ky, direction);
    let q = xi / C;
    let kz_prod = q * kappa(xi, kx, ky);
    // -2π i^{1-p} / (K k_z) with K k_z = -qκ
    let mag = ScaledReal::new(2.0 * PI) / ScaledReal::new(kz_prod);
    let pref = [
        PhasedReal { magnitude: mag, phase: Quadrant::One },
        PhasedReal { magnitude: mag, phase: Quadrant::MinusI },
    ];
    let values = fill(lmax, angle, pref)?;
    Ok(KernelSet { lmax, phi_k: angle.phi_k, kind: Regularity::Out, values })
}

fn check(lmax: usize, xi: f64) -> Result<()> {
    if lmax < 1 {
        return Err(Error::InvalidArgument("lmax must be at least 1".into()));
    }
    if !(xi > 0.0) {
        return Err(Error::InvalidArgument(format!("kernels need xi > 0, got {xi}")));
    }
    Ok(())
}

fn check_mode(sph: &SphericalMode, want: Regularity) -> Result<()> {
    if sph.s != want {
        return Err(Error::InvalidArgument(format!("expected a {want:?} spherical mode")));
    }
    if sph.l < 1 || sph.m.unsigned_abs() as usize > sph.l {
        return Err(Error::InvalidArgument(format!("invalid (l, m) = ({}, {})", sph.l, sph.m)));
    }
    Ok(())
}

/// Single regular-wave kernel `⟨ℓ,m,P,reg|k,p,φ⟩`.
pub fn kernel_reg(sph: &SphericalMode, pw: &PlaneWaveMode, xi: f64, period: f64) -> Result<Complex64> {
    check_mode(sph, Regularity::Reg)?;
    let set = kernels_reg(sph.l, xi, pw.kx_n(period), pw.ky, pw.direction)?;
    Ok(set.get(pw.p, sph.pol, sph.l, sph.m))
}

/// Single outgoing-wave kernel `⟨k,p,φ|ℓ,m,P,out⟩`.
pub fn kernel_out(pw: &PlaneWaveMode, sph: &SphericalMode, xi: f64, period: f64) -> Result<Complex64> {
    check_mode(sph, Regularity::Out)?;
    let kx = pw.kx_n(period);
    if kappa(xi, kx, pw.ky) == 0.0 {
        return Err(Error::InvalidArgument("kappa = 0".into()));
    }
    let set = kernels_out(sph.l, xi, kx, pw.ky, pw.direction)?;
    Ok(set.get(pw.p, sph.pol, sph.l, sph.m))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip() {
        for j in 0..lm_count(12) {
            let (l, m) = lm_from_index(j);
            assert_eq!(lm_index(l, m), j);
            assert!(m.unsigned_abs() as usize <= l);
        }
    }
}
