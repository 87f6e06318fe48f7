//! Fourier modal method for a lamellar grating on a half-space, imaginary frequency.
//!
//! Tangential fields are written per diffraction order in the frame
//! `â = ẑ×k̂_n`, `b̂ = k̂_n` and scaled as `(E_a, qE_b, H_a, qH_b)` with
//! `H = cμ₀H_phys` and `q = ξ/c`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write;
use std::sync::{Arc, RwLock};

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;
use sha2::{Digest, Sha256};

use crate::basis::Polarization;
use crate::constants::C;
use crate::materials::MaterialModel;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GratingSpec {
    pub period: f64,
    pub depth: f64,
    pub filling: f64,
    /// Ridge occupies `[x_offset, x_offset + f D]` modulo D.
    pub x_offset: f64,
    pub material: MaterialModel,
}

impl GratingSpec {
    pub fn new(period: f64, depth: f64, filling: f64, material: MaterialModel) -> Result<Self> {
        let g = GratingSpec { period, depth, filling, x_offset: 0.0, material };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.period > 0.0) || !self.period.is_finite() {
            return Err(Error::InvalidArgument(format!("period must be positive, got {}", self.period)));
        }
        if !(self.depth >= 0.0) || !self.depth.is_finite() {
            return Err(Error::InvalidArgument(format!("depth must be non-negative, got {}", self.depth)));
        }
        if !(self.filling > 0.0 && self.filling <= 1.0) {
            return Err(Error::InvalidArgument(format!("filling factor must lie in (0, 1], got {}", self.filling)));
        }
        Ok(())
    }

    /// Homogeneous half-space when the corrugation is absent.
    pub fn is_flat(&self) -> bool {
        self.filling == 1.0 || self.depth == 0.0
    }

    /// Center of the ridge, `x_offset + fD/2`.
    pub fn ridge_center(&self) -> f64 {
        self.x_offset + 0.5 * self.filling * self.period
    }

    pub fn fingerprint(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"grating");
        for v in [self.period, self.depth, self.filling, self.x_offset] {
            h.update(v.to_le_bytes());
        }
        h.update(self.material.fingerprint());
        h.finalize().into()
    }
}

/// Grating reflection `⟨n′,p′|R_G^+(k_x,k_y)|n,p⟩`, index `p·(2N+1) + (n+N)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReflectionBlock {
    pub xi: f64,
    pub kx: f64,
    pub ky: f64,
    pub period: f64,
    pub n_orders: usize,
    pub entries: DMatrix<Complex64>,
}

impl ReflectionBlock {
    pub fn order_count(&self) -> usize {
        2 * self.n_orders + 1
    }

    pub fn index(&self, n: i64, p: Polarization) -> usize {
        p.index() * self.order_count() + (n + self.n_orders as i64) as usize
    }

    pub fn get(&self, n_out: i64, p_out: Polarization, n_in: i64, p_in: Polarization) -> Complex64 {
        self.entries[(self.index(n_out, p_out), self.index(n_in, p_in))]
    }

    pub fn kx_n(&self, n: i64) -> f64 {
        self.kx + 2.0 * PI * n as f64 / self.period
    }

    pub fn orders(&self) -> impl Iterator<Item = i64> {
        let n = self.n_orders as i64;
        -n..=n
    }

    pub fn max_imag_ratio(&self) -> f64 {
        let re = self.entries.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
        let im = self.entries.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        if re == 0.0 {
            if im == 0.0 { 0.0 } else { f64::INFINITY }
        } else {
            im / re
        }
    }

    /// CSV with `n:p` labels; each column label expands to `.re` and `.im`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let labels: Vec<String> = Polarization::BOTH
            .iter()
            .flat_map(|&p| self.orders().map(move |n| format!("{n}:{p:?}")))
            .collect();
        write!(w, "n:p")?;
        for l in &labels {
            write!(w, ",{l}.re,{l}.im")?;
        }
        writeln!(w)?;
        for (i, l) in labels.iter().enumerate() {
            write!(w, "{l}")?;
            for j in 0..labels.len() {
                let z = self.entries[(i, j)];
                write!(w, ",{:e},{:e}", z.re, z.im)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Multiplies entry (n′, n) by `e^{i(k_{x,n} − k_{x,n′}) x_S}`: the grating moved by `x_S`.
pub fn apply_lateral_shift(block: &ReflectionBlock, x_s: f64) -> ReflectionBlock {
    let mut out = block.clone();
    if x_s == 0.0 {
        return out;
    }
    let m = block.order_count();
    let phase: Vec<Complex64> = block
        .orders()
        .map(|n| {
            // reduce the order phase modulo 2π so x_S = D is exact
            let t = (n as f64 * x_s / block.period).rem_euclid(1.0);
            Complex64::from_polar(1.0, block.kx * x_s + 2.0 * PI * t)
        })
        .collect();
    for j in 0..2 * m {
        for i in 0..2 * m {
            out.entries[(i, j)] *= phase[j % m] * phase[i % m].conj();
        }
    }
    out
}

/// Half-space Fresnel amplitudes `(r_TE, r_TM)` at parallel wavenumber `k`.
pub fn fresnel_coefficients(epsilon: f64, xi: f64, k: f64) -> (f64, f64) {
    let q = xi / C;
    let kap = (q * q + k * k).sqrt();
    if epsilon.is_infinite() {
        return (-1.0, 1.0);
    }
    let kt = (epsilon * q * q + k * k).sqrt();
    ((kap - kt) / (kap + kt), (epsilon * kap - kt) / (epsilon * kap + kt))
}

/// Diagonal block of Fresnel amplitudes on each diffraction order.
pub fn fresnel_reflection(
    material: &MaterialModel,
    xi: f64,
    kx: f64,
    ky: f64,
    n_orders: usize,
    period: f64,
) -> Result<ReflectionBlock> {
    let eps = material.permittivity(xi)?;
    let m = 2 * n_orders + 1;
    let mut entries = DMatrix::zeros(2 * m, 2 * m);
    for (i, n) in (-(n_orders as i64)..=n_orders as i64).enumerate() {
        let kn = kx + 2.0 * PI * n as f64 / period;
        let (rte, rtm) = fresnel_coefficients(eps, xi, kn.hypot(ky));
        entries[(i, i)] = Complex64::new(rte, 0.0);
        entries[(m + i, m + i)] = Complex64::new(rtm, 0.0);
    }
    Ok(ReflectionBlock { xi, kx, ky, period, n_orders, entries })
}

/// Fourier coefficients of the step profile `1 + (v−1)·[ridge]` for orders 0..=2·(2N),
/// with the ridge centered at 0.
fn centered_coefficients(value: f64, filling: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|m| {
            if m == 0 {
                filling * value + 1.0 - filling
            } else {
                let mf = m as f64;
                (value - 1.0) * (PI * mf * filling).sin() / (PI * mf)
            }
        })
        .collect()
}

fn toeplitz<T: ComplexField<RealField = f64> + Copy>(coef: impl Fn(i64) -> T, m: usize) -> DMatrix<T> {
    DMatrix::from_fn(m, m, |i, j| coef(i as i64 - j as i64))
}

struct Frame {
    c: Vec<f64>,
    s: Vec<f64>,
    k_rho: Vec<f64>,
    kx_n: Vec<f64>,
}

fn frame(kx: f64, ky: f64, period: f64, n_orders: usize) -> Frame {
    let m = 2 * n_orders + 1;
    let mut f = Frame { c: vec![0.0; m], s: vec![0.0; m], k_rho: vec![0.0; m], kx_n: vec![0.0; m] };
    for i in 0..m {
        let n = i as i64 - n_orders as i64;
        let kn = kx + 2.0 * PI * n as f64 / period;
        let kr = kn.hypot(ky);
        f.kx_n[i] = kn;
        f.k_rho[i] = kr;
        if kr == 0.0 {
            f.c[i] = 1.0;
            f.s[i] = 0.0;
        } else {
            f.c[i] = kn / kr;
            f.s[i] = ky / kr;
        }
    }
    f
}

fn lift<T: ComplexField<RealField = f64>>(x: f64) -> T {
    T::from_real(x)
}

/// Reflection matrix in the polarization convention of `basis` for a layer whose
/// ε and 1/ε Toeplitz matrices are given, on a substrate of permittivity `eps_sub`.
#[allow(clippy::too_many_arguments)]
fn solve_layer<T: ComplexField<RealField = f64> + Copy>(
    eps_t: &DMatrix<T>,
    inv_t: &DMatrix<T>,
    eps_sub: f64,
    xi: f64,
    kx: f64,
    ky: f64,
    period: f64,
    depth: f64,
    n_orders: usize,
) -> Result<DMatrix<Complex64>> {
    let m = 2 * n_orders + 1;
    let q = xi / C;
    let q2 = q * q;
    let fr = frame(kx, ky, period, n_orders);
    let kdiag = DMatrix::<T>::from_diagonal(&DVector::from_iterator(m, fr.kx_n.iter().map(|&k| lift::<T>(k))));

    // TE_x modes: (β² + K² + q²E) y = γ² y
    let mut ce = eps_t * lift::<T>(q2);
    for i in 0..m {
        ce[(i, i)] += lift::<T>(ky * ky + fr.kx_n[i] * fr.kx_n[i]);
    }
    let ce = hermitize(ce);
    let eig_e = nalgebra::SymmetricEigen::try_new(ce, 1e-15, 10_000)
        .ok_or_else(|| Error::EigenFailure("TE_x eigenproblem did not converge".into()))?;

    // TM_x modes: (q² + K E⁻¹ K) g = λ T g, γ² = λ + β²
    let eps_inv = eps_t
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Singular("Toeplitz permittivity matrix".into()))?;
    let mut b = &kdiag * &eps_inv * &kdiag;
    for i in 0..m {
        b[(i, i)] += lift::<T>(q2);
    }
    let b = hermitize(b);
    let chol = nalgebra::Cholesky::new(hermitize(inv_t.clone())).ok_or_else(|| {
        Error::EigenFailure(format!("inverse-permittivity Toeplitz matrix not positive definite (N = {n_orders})"))
    })?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Singular("Cholesky factor".into()))?;
    let reduced = hermitize(&l_inv * &b * l_inv.adjoint());
    let eig_m = nalgebra::SymmetricEigen::try_new(reduced, 1e-15, 10_000)
        .ok_or_else(|| Error::EigenFailure("TM_x eigenproblem did not converge".into()))?;
    let g = l_inv.adjoint() * &eig_m.eigenvectors;
    let v = &eps_inv * &kdiag * &g;
    let y = &eig_e.eigenvectors;
    let ey = eps_t * y;

    let gamma_e: Vec<f64> = eig_e.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).collect();
    let gamma_m: Vec<f64> = eig_m.eigenvalues.iter().map(|&l| (l + ky * ky).max(0.0).sqrt()).collect();
    if gamma_e.iter().chain(&gamma_m).any(|&g| !(g > 0.0)) {
        return Err(Error::EigenFailure("non-decaying layer mode".into()));
    }

    let mut pe = DMatrix::<T>::zeros(2 * m, 2 * m);
    let mut ph = DMatrix::<T>::zeros(2 * m, 2 * m);
    for j in 0..m {
        let ge = gamma_e[j];
        let gm = gamma_m[j];
        for i in 0..m {
            let (c, s, kr) = (fr.c[i], fr.s[i], fr.k_rho[i]);
            let yv = y[(i, j)];
            pe[(i, j)] = yv * lift::<T>(c);
            pe[(m + i, j)] = yv * lift::<T>(q * s);
            ph[(i, j)] = ey[(i, j)] * lift::<T>(-q * s / ge);
            ph[(m + i, j)] = yv * lift::<T>(c * ge);
            let gv = g[(i, j)];
            pe[(i, m + j)] = gv * lift::<T>(-q * s);
            pe[(m + i, m + j)] = gv * lift::<T>(q2 * c) + v[(i, j)] * lift::<T>(kr);
            ph[(i, m + j)] = gv * lift::<T>(-gm * c);
            ph[(m + i, m + j)] = gv * lift::<T>(-q * gm * s);
        }
    }
    let gammas: Vec<f64> = gamma_e.iter().chain(&gamma_m).copied().collect();

    // substrate admittance: H = Ys E with blocks [[0, -ε/κ_t], [κ_t, 0]]
    let kt: Vec<f64> = fr.k_rho.iter().map(|&k| (eps_sub * q2 + k * k).sqrt()).collect();
    let mut ys_pe = DMatrix::<T>::zeros(2 * m, 2 * m);
    for j in 0..2 * m {
        for i in 0..m {
            ys_pe[(i, j)] = pe[(m + i, j)] * lift::<T>(-eps_sub / kt[i]);
            ys_pe[(m + i, j)] = pe[(i, j)] * lift::<T>(kt[i]);
        }
    }
    let lhs = &ph + &ys_pe;
    let rhs = &ph - &ys_pe;
    let rb = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("substrate interface matching".into()))?;
    let x: Vec<f64> = gammas.iter().map(|&g| (-g * depth).exp()).collect();
    let gm_mat = DMatrix::<T>::from_fn(2 * m, 2 * m, |i, j| rb[(i, j)] * lift::<T>(x[i] * x[j]));
    let ident = DMatrix::<T>::identity(2 * m, 2 * m);
    let pe_g = &pe * (&ident + &gm_mat);
    let ph_g = &ph * (&ident - &gm_mat);

    // vacuum: V_E = [[1,0],[0,-κ]], V_H = [[0,1],[κ,0]] per order
    let kap: Vec<f64> = fr.k_rho.iter().map(|&k| (q2 + k * k).sqrt()).collect();
    let mut f1 = DMatrix::<T>::zeros(2 * m, 2 * m);
    let mut f2 = DMatrix::<T>::zeros(2 * m, 2 * m);
    for j in 0..2 * m {
        for i in 0..m {
            f1[(i, j)] = pe_g[(i, j)];
            f1[(m + i, j)] = pe_g[(m + i, j)] * lift::<T>(-1.0 / kap[i]);
            f2[(i, j)] = ph_g[(m + i, j)] * lift::<T>(1.0 / kap[i]);
            f2[(m + i, j)] = ph_g[(i, j)];
        }
    }
    let sum = &f1 + &f2;
    let diff = &f1 - &f2;
    // R' = (F1 - F2)(F1 + F2)⁻¹, solved as (F1 + F2)ᵀ R'ᵀ = (F1 - F2)ᵀ
    let rt = sum
        .transpose()
        .lu()
        .solve(&diff.transpose())
        .ok_or_else(|| Error::Singular("vacuum interface matching".into()))?;
    let r = rt.transpose();
    // upward TM modes of the symmetric convention are minus those of `basis`
    Ok(DMatrix::from_fn(2 * m, 2 * m, |i, j| {
        let z = to_complex(r[(i, j)]);
        if i >= m { -z } else { z }
    }))
}

fn hermitize<T: ComplexField<RealField = f64> + Copy>(a: DMatrix<T>) -> DMatrix<T> {
    let at = a.adjoint();
    (a + at) * lift::<T>(0.5)
}

fn to_complex<T: ComplexField<RealField = f64>>(z: T) -> Complex64 {
    Complex64::new(z.clone().real(), z.imaginary())
}

fn check_args(spec: &GratingSpec, xi: f64, kx: f64, n_orders: usize) -> Result<()> {
    spec.validate()?;
    if !(xi > 0.0) {
        return Err(Error::InvalidArgument(format!("xi must be positive, got {xi}")));
    }
    if n_orders < 1 {
        return Err(Error::InvalidArgument("need at least one diffraction order on each side".into()));
    }
    if kx.abs() > PI / spec.period * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!("kx = {kx} outside the first Brillouin zone")));
    }
    if spec.filling < 1.0 && spec.filling * ((2 * n_orders + 1) as f64) < 2.0 {
        log::warn!("N = {n_orders} too small to resolve filling factor {}", spec.filling);
    }
    Ok(())
}

/// Reflection block for the grating with its ridge centered at the origin.
pub fn grating_reflection_centered(spec: &GratingSpec, xi: f64, kx: f64, ky: f64, n_orders: usize) -> Result<ReflectionBlock> {
    check_args(spec, xi, kx, n_orders)?;
    let eps = spec.material.permittivity(xi)?;
    let m = 2 * n_orders + 1;
    let entries = if eps == 1.0 {
        DMatrix::zeros(2 * m, 2 * m)
    } else {
        let ce = centered_coefficients(eps, spec.filling, 2 * m);
        let ci = centered_coefficients(1.0 / eps, spec.filling, 2 * m);
        let et = toeplitz(|d| ce[d.unsigned_abs() as usize], m);
        let it = toeplitz(|d| ci[d.unsigned_abs() as usize], m);
        solve_layer(&et, &it, eps, xi, kx, ky, spec.period, spec.depth, n_orders)?
    };
    Ok(ReflectionBlock { xi, kx, ky, period: spec.period, n_orders, entries })
}

/// Reflection block `⟨n′,p′|R_G^+(k_x,k_y)|n,p⟩` in the grating's own frame
/// (ridge on `[x_offset, x_offset + fD]`).
pub fn grating_reflection(spec: &GratingSpec, xi: f64, kx: f64, ky: f64, n_orders: usize) -> Result<ReflectionBlock> {
    let centered = grating_reflection_centered(spec, xi, kx, ky, n_orders)?;
    Ok(apply_lateral_shift(&centered, spec.ridge_center()))
}

/// Same as [`grating_reflection`] but with the shifted step profile's complex
/// Fourier coefficients fed straight into the solver.
pub fn grating_reflection_direct(spec: &GratingSpec, xi: f64, kx: f64, ky: f64, n_orders: usize) -> Result<ReflectionBlock> {
    check_args(spec, xi, kx, n_orders)?;
    let eps = spec.material.permittivity(xi)?;
    if eps == 1.0 || spec.is_flat() {
        return grating_reflection(spec, xi, kx, ky, n_orders);
    }
    let m = 2 * n_orders + 1;
    let t = spec.ridge_center();
    let shifted = |coef: &[f64], d: i64| {
        let phase = -2.0 * PI * (d as f64 * t / spec.period).rem_euclid(1.0);
        Complex64::from_polar(coef[d.unsigned_abs() as usize], phase)
    };
    let ce = centered_coefficients(eps, spec.filling, 2 * m);
    let ci = centered_coefficients(1.0 / eps, spec.filling, 2 * m);
    let et = toeplitz(|d| shifted(&ce, d), m);
    let it = toeplitz(|d| shifted(&ci, d), m);
    let entries = solve_layer(&et, &it, eps, xi, kx, ky, spec.period, spec.depth, n_orders)?;
    Ok(ReflectionBlock { xi, kx, ky, period: spec.period, n_orders, entries })
}

type BlockKey = ([u8; 32], u64, u64, u64, usize);

/// Concurrent memo of centered reflection blocks.
#[derive(Debug, Default)]
pub struct ReflectionCache {
    map: RwLock<HashMap<BlockKey, Arc<ReflectionBlock>>>,
    capacity: usize,
}

impl ReflectionCache {
    pub fn new(capacity: usize) -> Self {
        ReflectionCache { map: RwLock::new(HashMap::new()), capacity }
    }

    pub fn len(&self) -> usize {
        self.map.read().map(|m| m.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        if let Ok(mut m) = self.map.write() {
            m.clear();
        }
    }

    /// Centered block for `spec`, computed on a miss; the shape of the profile
    /// (not its offset) enters the key.
    pub fn centered(&self, spec: &GratingSpec, xi: f64, kx: f64, ky: f64, n_orders: usize) -> Result<Arc<ReflectionBlock>> {
        let mut shape = spec.clone();
        shape.x_offset = 0.0;
        let key = (shape.fingerprint(), xi.to_bits(), kx.to_bits(), ky.to_bits(), n_orders);
        if let Some(b) = self.map.read().ok().and_then(|m| m.get(&key).cloned()) {
            return Ok(b);
        }
        let block = Arc::new(grating_reflection_centered(spec, xi, kx, ky, n_orders)?);
        if let Ok(mut m) = self.map.write() {
            if m.len() < self.capacity {
                m.insert(key, block.clone());
            }
        }
        Ok(block)
    }
}

/// Starting truncation `ceil(5D/(2πd)) + 5`.
pub fn default_orders(period: f64, distance: f64) -> usize {
    (5.0 * period / (2.0 * PI * distance)).ceil() as usize + 5
}
