//! Matsubara sums, forces, proximity-force comparators and plateau diagnostics.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use polylog::Li2;
use rayon::prelude::*;

use crate::basis::{kappa, kernels_out, kernels_reg, Multipole, Polarization};
use crate::constants::{ev_to_rad_per_s, C, HBAR, K_B};
use crate::materials::MaterialModel;
use crate::mie::{mie_coefficients, SphereSpec};
use crate::quadrature::{gl_interval, graded_from_zero, graded_symmetric, panels};
use crate::rcwa::{default_orders, fresnel_coefficients, GratingSpec, ReflectionCache};
use crate::roundtrip::{assemble_positions, auto_truncate, log_det, log_det_one_minus, Assembly, TruncationSpec};
use crate::specfun::{Direction, ScaledReal};
use crate::{Error, Result};

const MAX_TERMS: usize = 20_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThermalState {
    pub temperature: f64,
    pub kbt: f64,
}

impl ThermalState {
    pub fn new(temperature: f64) -> Result<Self> {
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::InvalidArgument(format!("temperature must be positive, got {temperature}")));
        }
        Ok(ThermalState { temperature, kbt: K_B * temperature })
    }

    /// k_BT = 25.9 meV.
    pub fn paper() -> Self {
        let kbt = 0.0259 * HBAR * ev_to_rad_per_s(1.0);
        ThermalState { temperature: kbt / K_B, kbt }
    }

    /// ξ₁ = 2πk_BT/ħ.
    pub fn xi1(&self) -> f64 {
        2.0 * PI * self.kbt / HBAR
    }

    pub fn xi(&self, n: usize) -> f64 {
        n as f64 * self.xi1()
    }
}

impl Default for ThermalState {
    fn default() -> Self {
        ThermalState { temperature: 300.0, kbt: K_B * 300.0 }
    }
}

/// Controls the Matsubara sum of the exact sphere-grating energy.
#[derive(Clone, Debug)]
pub struct EnergySettings {
    pub tol: f64,
    /// `None` runs [`auto_truncate`] first.
    pub trunc: Option<TruncationSpec>,
    pub assembly: Assembly,
    /// n = 0 is evaluated at this multiple of ξ₁.
    pub surrogate_factor: f64,
    pub cache: Option<Arc<ReflectionCache>>,
}

impl EnergySettings {
    pub fn new(tol: f64) -> Self {
        EnergySettings { tol, trunc: None, assembly: Assembly::Mirror, surrogate_factor: 1e-3, cache: None }
    }

    pub fn with_trunc(tol: f64, trunc: TruncationSpec) -> Self {
        EnergySettings { trunc: Some(trunc), ..Self::new(tol) }
    }

    fn check(&self) -> Result<()> {
        check_tol(self.tol)?;
        if !(self.surrogate_factor > 0.0 && self.surrogate_factor < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "surrogate factor must lie in (0, 1), got {}",
                self.surrogate_factor
            )));
        }
        Ok(())
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 1e-6 && tol < 1e-1) {
        return Err(Error::InvalidArgument(format!("tolerance must lie in (1e-6, 1e-1), got {tol}")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatsubaraTerm {
    pub n: usize,
    pub xi: f64,
    /// Contribution to 𝓕 in joules, half weight included for n = 0.
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyResult {
    pub free_energy: f64,
    pub kbt: f64,
    pub terms: Vec<MatsubaraTerm>,
    pub trunc: TruncationSpec,
    pub distance: f64,
    pub radius: f64,
    pub x_s: f64,
}

impl EnergyResult {
    pub fn over_kbt(&self) -> f64 {
        self.free_energy / self.kbt
    }

    /// Columns `n, xi_rad_per_s, term_J, cumulative_J`.
    pub fn write_ledger_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "n,xi_rad_per_s,term_J,cumulative_J")?;
        let mut acc = 0.0;
        for t in &self.terms {
            acc += t.value;
            writeln!(w, "{},{:e},{:e},{:e}", t.n, t.xi, t.value, acc)?;
        }
        Ok(())
    }
}

/// Sums `k_BT Σ′ f(ξ_n)` for a vector-valued `f` until the last three terms
/// of every component are below `tol·|acc|/10`.
fn matsubara_sum<F>(thermal: &ThermalState, tol: f64, surrogate: f64, width: usize, mut term: F) -> Result<Vec<Vec<MatsubaraTerm>>>
where
    F: FnMut(f64) -> Result<Vec<f64>>,
{
    let mut ledgers: Vec<Vec<MatsubaraTerm>> = vec![Vec::new(); width];
    let mut acc = vec![0.0; width];
    let mut small_run = 0;
    for n in 0..MAX_TERMS {
        let (xi, weight) = if n == 0 { (surrogate * thermal.xi1(), 0.5) } else { (thermal.xi(n), 1.0) };
        let values = term(xi)?;
        let mut all_small = true;
        for (k, v) in values.iter().enumerate() {
            let value = thermal.kbt * weight * v;
            acc[k] += value;
            ledgers[k].push(MatsubaraTerm { n, xi, value });
            if value.abs() > tol * acc[k].abs() / 10.0 {
                all_small = false;
            }
        }
        if n > 0 && all_small {
            small_run += 1;
            if small_run == 3 {
                return Ok(ledgers);
            }
        } else {
            small_run = 0;
        }
    }
    Err(Error::NonDecaying(MAX_TERMS))
}

/// Exact free energy 𝓕(x_S) with truncation chosen by [`auto_truncate`].
pub fn free_energy(
    sphere: &SphereSpec,
    grating: &GratingSpec,
    d: f64,
    x_s: f64,
    thermal: &ThermalState,
    tol: f64,
) -> Result<EnergyResult> {
    let mut v = free_energy_with(sphere, grating, d, &[x_s], thermal, &EnergySettings::new(tol))?;
    Ok(v.remove(0))
}

/// 𝓕 at several lateral positions, all with the same Matsubara frequencies.
pub fn free_energy_with(
    sphere: &SphereSpec,
    grating: &GratingSpec,
    d: f64,
    positions: &[f64],
    thermal: &ThermalState,
    settings: &EnergySettings,
) -> Result<Vec<EnergyResult>> {
    settings.check()?;
    if !(d > 0.0) {
        return Err(Error::InvalidArgument(format!("distance must be positive, got {d}")));
    }
    if positions.is_empty() {
        return Ok(Vec::new());
    }
    let trunc = match settings.trunc {
        Some(t) => t,
        None => auto_truncate(sphere, grating, d, settings.tol)?,
    };
    let cache = settings.cache.as_deref();
    let ledgers = matsubara_sum(thermal, settings.tol, settings.surrogate_factor, positions.len(), |xi| {
        let ms = assemble_positions(xi, sphere, grating, d, positions, &trunc, settings.assembly, cache)?;
        ms.iter().map(log_det_one_minus).collect()
    })?;
    Ok(ledgers
        .into_iter()
        .zip(positions)
        .map(|(terms, &x_s)| EnergyResult {
            free_energy: terms.iter().map(|t| t.value).sum(),
            kbt: thermal.kbt,
            terms,
            trunc,
            distance: d,
            radius: sphere.radius,
            x_s,
        })
        .collect())
}

fn check_step(x: f64, h: f64) -> Result<()> {
    if !(h > 0.0) || x + 0.5 * h == x || (x + 0.5 * h) - x < 0.25 * h {
        return Err(Error::StepUnderflow(format!("step {h:e} is below the resolution of {x:e}")));
    }
    Ok(())
}

/// Central difference with step h and h/2, one Richardson level.
fn richardson(fp: f64, fm: f64, fp2: f64, fm2: f64, h: f64) -> f64 {
    let d1 = (fp - fm) / (2.0 * h);
    let d2 = (fp2 - fm2) / h;
    (4.0 * d2 - d1) / 3.0
}

/// F_x = −∂𝓕/∂x_S, positive toward increasing x_S.
pub fn lateral_force(
    sphere: &SphereSpec,
    grating: &GratingSpec,
    d: f64,
    x_s: f64,
    thermal: &ThermalState,
    tol: f64,
) -> Result<f64> {
    let mut settings = EnergySettings::new(tol);
    settings.trunc = Some(auto_truncate(sphere, grating, d, tol)?);
    Ok(lateral_force_with(sphere, grating, d, &[x_s], thermal, &settings)?[0])
}

/// Lateral force at each position from one batched energy evaluation.
pub fn lateral_force_with(
    sphere: &SphereSpec,
    grating: &GratingSpec,
    d: f64,
    positions: &[f64],
    thermal: &ThermalState,
    settings: &EnergySettings,
) -> Result<Vec<f64>> {
    let h = grating.period / 200.0;
    let mut xs = Vec::with_capacity(4 * positions.len());
    for &x in positions {
        check_step(x, h)?;
        xs.extend([x + h, x - h, x + 0.5 * h, x - 0.5 * h]);
    }
    let e = free_energy_with(sphere, grating, d, &xs, thermal, settings)?;
    Ok(e.chunks(4)
        .map(|c| -richardson(c[0].free_energy, c[1].free_energy, c[2].free_energy, c[3].free_energy, h))
        .collect())
}

/// F_z = −∂𝓕/∂d, positive for repulsion.
pub fn normal_force_with(
    sphere: &SphereSpec,
    grating: &GratingSpec,
    d: f64,
    x_s: f64,
    thermal: &ThermalState,
    settings: &EnergySettings,
) -> Result<f64> {
    let h = d / 200.0;
    check_step(d, h)?;
    let mut f = [0.0; 4];
    for (slot, dd) in f.iter_mut().zip([d + h, d - h, d + 0.5 * h, d - 0.5 * h]) {
        *slot = free_energy_with(sphere, grating, dd, &[x_s], thermal, settings)?[0].free_energy;
    }
    Ok(-richardson(f[0], f[1], f[2], f[3], h))
}

/// κ nodes on [q, ∞) through u = κz, panels out to u − qz = 40.
fn kappa_nodes(q: f64, z: f64) -> Vec<(f64, f64)> {
    let u0 = q * z;
    let edges: Vec<f64> = [0.0, 0.125, 0.375, 1.0, 2.0, 4.0, 8.0, 14.0, 24.0, 40.0].iter().map(|e| (u0 + e) / z).collect();
    panels(&edges, 12)
}

fn plane_plane_integrand(eps_a: f64, eps_b: f64, xi: f64, z: f64, primitive: bool) -> f64 {
    let q = xi / C;
    let mut s = 0.0;
    for (kap, w) in kappa_nodes(q, z) {
        let k = (kap * kap - q * q).max(0.0).sqrt();
        let (ta, ma) = fresnel_coefficients(eps_a, xi, k);
        let (tb, mb) = fresnel_coefficients(eps_b, xi, k);
        let e = (-2.0 * kap * z).exp();
        let v = if primitive {
            // ∫_z^∞ log(1 − r e^{−2κz′}) dz′ = −Li₂(r e^{−2κz})/(2κ)
            -((ta * tb * e).li2() + (ma * mb * e).li2()) / (2.0 * kap)
        } else {
            (-ta * tb * e).ln_1p() + (-ma * mb * e).ln_1p()
        };
        s += w * kap * v;
    }
    s / (2.0 * PI)
}

fn plane_plane_sum(mat_a: &MaterialModel, mat_b: &MaterialModel, z: f64, thermal: &ThermalState, tol: f64, primitive: bool) -> Result<f64> {
    check_tol(tol)?;
    if !(z > 0.0) {
        return Err(Error::InvalidArgument(format!("separation must be positive, got {z}")));
    }
    if mat_a.is_vacuum() || mat_b.is_vacuum() {
        return Ok(0.0);
    }
    let ledger = matsubara_sum(thermal, tol, 1e-3, 1, |xi| {
        let (ea, eb) = (mat_a.permittivity(xi)?, mat_b.permittivity(xi)?);
        Ok(vec![plane_plane_integrand(ea, eb, xi, z, primitive)])
    })?;
    Ok(ledger[0].iter().map(|t| t.value).sum())
}

/// Lifshitz free energy per area between two half spaces (J/m²).
pub fn plane_plane_energy(mat_a: &MaterialModel, mat_b: &MaterialModel, z: f64, thermal: &ThermalState, tol: f64) -> Result<f64> {
    plane_plane_sum(mat_a, mat_b, z, thermal, tol, false)
}

/// `D_PP(z) = ∫_z^∞ 𝓔_PP(z′) dz′` (J/m).
pub fn plane_plane_primitive(mat_a: &MaterialModel, mat_b: &MaterialModel, z: f64, thermal: &ThermalState, tol: f64) -> Result<f64> {
    plane_plane_sum(mat_a, mat_b, z, thermal, tol, true)
}

/// k-space quadrature for the plane-grating energy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneGratingNumerics {
    /// `None` picks enough orders to reach `cutoff/z` in k_x.
    pub n_orders: Option<usize>,
    pub n_kx: usize,
    pub n_ky: usize,
    /// k_y runs to `cutoff/z`.
    pub cutoff: f64,
}

impl Default for PlaneGratingNumerics {
    fn default() -> Self {
        PlaneGratingNumerics { n_orders: None, n_kx: 16, n_ky: 32, cutoff: 12.0 }
    }
}

impl PlaneGratingNumerics {
    pub fn orders(&self, period: f64, z: f64) -> usize {
        self.n_orders.unwrap_or_else(|| {
            let reach = (self.cutoff * period / (2.0 * PI * z)).ceil() as usize;
            reach.max(default_orders(period, z))
        })
    }
}

/// Free energy per area between a plane of `plane_mat` and the grating at
/// separation `z` from its top (J/m²).
pub fn plane_grating_energy(plane_mat: &MaterialModel, grating: &GratingSpec, z: f64, thermal: &ThermalState, tol: f64) -> Result<f64> {
    plane_grating_energy_with(plane_mat, grating, z, thermal, tol, &PlaneGratingNumerics::default(), None)
}

pub fn plane_grating_energy_with(
    plane_mat: &MaterialModel,
    grating: &GratingSpec,
    z: f64,
    thermal: &ThermalState,
    tol: f64,
    numerics: &PlaneGratingNumerics,
    cache: Option<&ReflectionCache>,
) -> Result<f64> {
    check_tol(tol)?;
    grating.validate()?;
    if !(z > 0.0) {
        return Err(Error::InvalidArgument(format!("separation must be positive, got {z}")));
    }
    if plane_mat.is_vacuum() || grating.material.is_vacuum() {
        return Ok(0.0);
    }
    let n_orders = numerics.orders(grating.period, z);
    let kx_nodes = graded_symmetric(numerics.n_kx, PI / grating.period);
    let ky_nodes = graded_from_zero(numerics.n_ky.div_ceil(2), numerics.cutoff / z);
    let nodes: Vec<(f64, f64, f64)> = kx_nodes
        .iter()
        .flat_map(|&(kx, wx)| ky_nodes.iter().map(move |&(ky, wy)| (kx, ky, 2.0 * wx * wy / (4.0 * PI * PI))))
        .collect();
    let ledger = matsubara_sum(thermal, tol, 1e-3, 1, |xi| {
        let eps = plane_mat.permittivity(xi)?;
        let parts: Vec<Result<f64>> = nodes
            .par_iter()
            .map(|&(kx, ky, w)| {
                let g = match cache {
                    Some(c) => c.centered(grating, xi, kx, ky, n_orders)?,
                    None => Arc::new(crate::rcwa::grating_reflection_centered(grating, xi, kx, ky, n_orders)?),
                };
                let m = g.order_count();
                let mut diag_r = vec![0.0; 2 * m];
                let mut decay = vec![0.0; 2 * m];
                for (i, n) in g.orders().enumerate() {
                    let kn = g.kx_n(n);
                    let (te, tm) = fresnel_coefficients(eps, xi, kn.hypot(ky));
                    let e = (-kappa(xi, kn, ky) * z).exp();
                    diag_r[i] = te;
                    diag_r[m + i] = tm;
                    decay[i] = e;
                    decay[m + i] = e;
                }
                let a = DMatrix::from_fn(2 * m, 2 * m, |i, j| {
                    let id = if i == j { 1.0 } else { 0.0 };
                    Complex64::new(id, 0.0) - g.entries[(i, j)] * (diag_r[i] * decay[i] * decay[j])
                });
                let v = log_det(&a)?;
                Ok(w * v.re)
            })
            .collect();
        let mut s = 0.0;
        for p in parts {
            s += p?;
        }
        Ok(vec![s])
    })?;
    Ok(ledger[0].iter().map(|t| t.value).sum())
}

/// z nodes on [d, d + R], geometric panels refined toward z = d.
fn pfa_nodes(d: f64, r: f64) -> Vec<(f64, f64)> {
    let mut edges = vec![d];
    let mut w = (0.25 * d).min(r);
    while edges.last().copied().unwrap_or(d) + w < d + r {
        edges.push(d + w);
        w *= 2.0;
    }
    edges.push(d + r);
    edges.dedup();
    panels(&edges, 6)
}

/// Single PFA `2πR ∫_d^{d+R} 𝓔_PG(z) dz` with a gold-like plane of the sphere's material.
pub fn pfa_single(sphere: &SphereSpec, grating: &GratingSpec, d: f64, thermal: &ThermalState, tol: f64) -> Result<f64> {
    pfa_single_with(sphere, grating, d, thermal, tol, &PlaneGratingNumerics::default())
}

pub fn pfa_single_with(
    sphere: &SphereSpec,
    grating: &GratingSpec,
    d: f64,
    thermal: &ThermalState,
    tol: f64,
    numerics: &PlaneGratingNumerics,
) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::InvalidArgument(format!("distance must be positive, got {d}")));
    }
    let mut s = 0.0;
    for (z, w) in pfa_nodes(d, sphere.radius) {
        s += w * plane_grating_energy_with(&sphere.material, grating, z, thermal, tol, numerics, None)?;
    }
    Ok(2.0 * PI * sphere.radius * s)
}

/// Double PFA: ridge tops at d with weight f, groove floors at d + h with weight 1 − f.
pub fn pfa_double(sphere: &SphereSpec, grating: &GratingSpec, d: f64, thermal: &ThermalState, tol: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::InvalidArgument(format!("distance must be positive, got {d}")));
    }
    grating.validate()?;
    let r = sphere.radius;
    let dpp = |z: f64| plane_plane_primitive(&sphere.material, &grating.material, z, thermal, tol);
    let f = grating.filling;
    let mut s = f * (dpp(d)? - dpp(d + r)?);
    if f < 1.0 {
        let h = grating.depth;
        s += (1.0 - f) * (dpp(d + h)? - dpp(d + h + r)?);
    }
    Ok(2.0 * PI * r * s)
}

/// Radial quadrature for the m-block plane-sphere reference.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneSphereNumerics {
    pub lmax: usize,
    pub n_k: usize,
    /// k runs to `(cutoff + 2ℓ_max)/(d + R)`.
    pub cutoff: f64,
}

/// Sphere above a homogeneous plane, one m block at a time with the
/// azimuthal integral done in closed form.
pub fn plane_sphere_energy(
    sphere: &SphereSpec,
    plane: &MaterialModel,
    d: f64,
    thermal: &ThermalState,
    tol: f64,
    numerics: &PlaneSphereNumerics,
) -> Result<f64> {
    check_tol(tol)?;
    if !(d > 0.0) {
        return Err(Error::InvalidArgument(format!("distance must be positive, got {d}")));
    }
    if plane.is_vacuum() || sphere.material.is_vacuum() {
        return Ok(0.0);
    }
    let lmax = numerics.lmax;
    let length = d + sphere.radius;
    let radial = graded_from_zero(numerics.n_k, (numerics.cutoff + 2.0 * lmax as f64) / length);
    let ledger = matsubara_sum(thermal, tol, 1e-3, 1, |xi| {
        Ok(vec![plane_sphere_term(sphere, plane, xi, length, lmax, &radial)?])
    })?;
    Ok(ledger[0].iter().map(|t| t.value).sum())
}

fn plane_sphere_term(
    sphere: &SphereSpec,
    plane: &MaterialModel,
    xi: f64,
    length: f64,
    lmax: usize,
    radial: &[(f64, f64)],
) -> Result<f64> {
    let mie = mie_coefficients(sphere, xi, lmax)?;
    let eps = plane.permittivity(xi)?;
    let lm = lmax as i64;
    // per m: modes (ℓ, P) with ℓ ≥ max(|m|, 1)
    let blocks: Vec<Vec<(usize, Multipole)>> = (-lm..=lm)
        .map(|m| {
            Multipole::BOTH
                .iter()
                .flat_map(|&p| (m.unsigned_abs().max(1) as usize..=lmax).map(move |l| (l, p)))
                .collect()
        })
        .collect();
    let mut acc: Vec<DMatrix<Complex64>> = blocks.iter().map(|b| DMatrix::zeros(b.len(), b.len())).collect();
    for &(k, w) in radial {
        let kr = kernels_reg(lmax, xi, k, 0.0, Direction::Up)?;
        let ko = kernels_out(lmax, xi, k, 0.0, Direction::Down)?;
        let tr = ScaledReal::exp(-kappa(xi, k, 0.0) * length);
        let (rte, rtm) = fresnel_coefficients(eps, xi, k);
        let weight = w * k / (2.0 * PI);
        for ((m, modes), out) in (-lm..=lm).zip(&blocks).zip(acc.iter_mut()) {
            let n = modes.len();
            let mut a = DMatrix::<Complex64>::zeros(n, 2);
            let mut b = DMatrix::<Complex64>::zeros(2, n);
            for (i, &(l, pol)) in modes.iter().enumerate() {
                let r = mie.scaled(l, pol);
                if r.is_zero() {
                    continue;
                }
                let s = r.abs().sqrt() * tr;
                for p in Polarization::BOTH {
                    let rp = if p == Polarization::TE { rte } else { rtm };
                    let v = kr.raw(p, pol, l, m);
                    a[(i, p.index())] = v.phase.to_complex() * (v.magnitude * s).to_f64() * r.signum();
                    let v = ko.raw(p, pol, l, m);
                    b[(p.index(), i)] = v.phase.to_complex() * (v.magnitude * s).to_f64() * rp * weight;
                }
            }
            *out += a * b;
        }
    }
    let mut total = 0.0;
    for m in acc {
        let n = m.nrows();
        let v = log_det(&(DMatrix::identity(n, n) - m))?;
        if v.im.abs() > 1e-8 * v.re.abs().max(1e-300) && v.im.abs() > 1e-14 {
            return Err(Error::ImaginaryResidue { real: v.re, imag: v.im });
        }
        total += v.re;
    }
    Ok(total)
}

/// η = 𝓕 / 𝓕_PFA.
pub fn eta(exact: f64, pfa: f64) -> f64 {
    exact / pfa
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlateauFlag {
    Ok,
    /// No lateral dependence; Δx undefined.
    Flat,
    /// Samples in a transition region are not monotone; Δx is a bracketed estimate.
    NonMonotone,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlateauResult {
    /// 𝓕(groove center) − 𝓕(ridge center).
    pub delta_f: f64,
    pub delta_x: Option<f64>,
    pub x1: Option<f64>,
    pub x2: Option<f64>,
    pub flag: PlateauFlag,
}

/// Monotone cubic Hermite interpolant (Fritsch–Carlson slopes).
#[derive(Clone, Debug)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    slope: Vec<f64>,
}

impl Pchip {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(Error::InvalidArgument("need at least two samples of equal length".into()));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::NonMonotoneGrid);
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut slope = vec![0.0; n];
        slope[0] = delta[0];
        slope[n - 1] = delta[n - 2];
        for i in 1..n - 1 {
            if delta[i - 1] * delta[i] > 0.0 {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                slope[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
            }
        }
        Ok(Pchip { x, y, slope })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let i = match self.x.partition_point(|&v| v <= t) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let (h00, h10, h01, h11) = (
            (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s),
            s * (1.0 - s) * (1.0 - s),
            s * s * (3.0 - 2.0 * s),
            s * s * (s - 1.0),
        );
        h00 * self.y[i] + h10 * h * self.slope[i] + h01 * self.y[i + 1] + h11 * h * self.slope[i + 1]
    }
}

/// ΔF and Δx from energies sampled over one period (`xs` increasing, at
/// least 32 points, spanning D apart from one grid step).
pub fn plateau_from_samples(grating: &GratingSpec, xs: &[f64], energies: &[f64]) -> Result<PlateauResult> {
    let period = grating.period;
    if xs.len() < 32 || energies.len() != xs.len() {
        return Err(Error::InvalidArgument(format!("need at least 32 samples over one period, got {}", xs.len())));
    }
    let x0 = xs[0];
    if xs.windows(2).any(|w| !(w[1] > w[0])) || xs[xs.len() - 1] >= x0 + period {
        return Err(Error::NonMonotoneGrid);
    }
    let gap = x0 + period - xs[xs.len() - 1];
    if gap > 2.0 * period / xs.len() as f64 + 1e-12 * period {
        return Err(Error::InvalidArgument("samples do not cover one period".into()));
    }
    // periodic extension on both sides
    let mut px = Vec::with_capacity(xs.len() + 6);
    let mut py = Vec::with_capacity(xs.len() + 6);
    for k in [-1.0, 0.0, 1.0] {
        for (x, y) in xs.iter().zip(energies) {
            px.push(x + k * period);
            py.push(*y);
        }
    }
    let interp = Pchip::new(px, py)?;
    let wrap = |x: f64| x0 + (x - x0).rem_euclid(period);
    let ridge = grating.ridge_center();
    let corner = ridge + 0.5 * grating.filling * period;
    let groove = ridge + 0.5 * period;
    let f = |x: f64| interp.eval(wrap(x));
    let (fr, fc, fg) = (f(ridge), f(corner), f(groove));
    let delta_f = fg - fr;
    let scale = energies.iter().map(|e| e.abs()).fold(0.0, f64::max);
    if delta_f.abs() <= 1e-12 * scale || scale == 0.0 {
        return Ok(PlateauResult { delta_f, delta_x: None, x1: None, x2: None, flag: PlateauFlag::Flat });
    }
    let mut flag = PlateauFlag::Ok;
    let mut solve = |a: f64, b: f64, target: f64| -> Option<f64> {
        // sample monotonicity between a and b
        let inside: Vec<f64> = xs
            .iter()
            .flat_map(|&x| [x - period, x, x + period])
            .filter(|&x| x > a && x < b)
            .collect();
        let mut vals: Vec<(f64, f64)> = inside.iter().map(|&x| (x, f(x))).collect();
        vals.sort_by(|p, q| p.0.total_cmp(&q.0));
        let mut seq = vec![f(a)];
        seq.extend(vals.iter().map(|v| v.1));
        seq.push(f(b));
        let up = seq.windows(2).all(|w| w[1] >= w[0]);
        let down = seq.windows(2).all(|w| w[1] <= w[0]);
        if !(up || down) {
            flag = PlateauFlag::NonMonotone;
        }
        let (mut lo, mut hi) = (a, b);
        let g = |x: f64| f(x) - target;
        if g(lo) * g(hi) > 0.0 {
            return None;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(lo) * g(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo < 1e-12 * period {
                break;
            }
        }
        Some(0.5 * (lo + hi))
    };
    let x1 = solve(ridge, corner, 0.5 * (fr + fc));
    let x2 = solve(corner, groove, 0.5 * (fc + fg));
    let delta_x = match (x1, x2) {
        (Some(a), Some(b)) => Some(b - a),
        _ => None,
    };
    Ok(PlateauResult { delta_f, delta_x, x1, x2, flag })
}

/// Computes 𝓕 on `xs` and reduces it to the plateau observables.
pub fn plateau_observables(
    sphere: &SphereSpec,
    grating: &GratingSpec,
    d: f64,
    thermal: &ThermalState,
    xs: &[f64],
    settings: &EnergySettings,
) -> Result<PlateauResult> {
    let e = free_energy_with(sphere, grating, d, xs, thermal, settings)?;
    let energies: Vec<f64> = e.iter().map(|r| r.free_energy).collect();
    plateau_from_samples(grating, xs, &energies)
}

/// `n` equally spaced positions starting at the ridge center.
pub fn period_grid(grating: &GratingSpec, n: usize) -> Vec<f64> {
    let c = grating.ridge_center();
    (0..n).map(|i| c + grating.period * i as f64 / n as f64).collect()
}

/// Simple GL helper over [a, b] for callers integrating energies in z.
pub fn integrate(a: f64, b: f64, n: usize, mut f: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    let mut s = 0.0;
    for (x, w) in gl_interval(n, a, b) {
        s += w * f(x)?;
    }
    Ok(s)
}
