//! Round-trip matrix over outgoing spherical modes and `log det(1 - M)`.
//!
//! The matrix is stored in balanced form `M̃ = S⁻¹ M S` with `S = diag(√|r_ℓP|)`,
//! which has the same determinant as `M` and keeps the large Mie and kernel
//! magnitudes from meeting in a single floating-point product.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::basis::{kappa, kernels_out, kernels_reg, lm_count, lm_from_index, lm_index, Multipole, Polarization};
use crate::constants::{C, HBAR, K_B};
use crate::materials::MaterialModel;
use crate::mie::{mie_coefficients, SphereSpec};
use crate::quadrature::{graded_from_zero, graded_symmetric};
use crate::rcwa::{apply_lateral_shift, default_orders, fresnel_reflection, GratingSpec, ReflectionBlock, ReflectionCache};
use crate::specfun::{Direction, ScaledReal};
use crate::{Error, Result};

const CHUNK: usize = 16;
const SNAPSHOT_MAGIC: &[u8; 8] = b"SGCRTM\0\x01";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncationSpec {
    pub lmax: usize,
    /// Diffraction orders kept: n ∈ −N..=N.
    pub n_orders: usize,
    pub n_kx: usize,
    pub n_ky: usize,
    /// Λ in the radial cutoff `(Λ + 2ℓ_max)/(d + R_S)`.
    pub ky_cutoff: f64,
}

impl TruncationSpec {
    /// Starting point of the convergence loop: ℓ_max = ceil(4R/d) + 2.
    pub fn seed(sphere: &SphereSpec, grating: &GratingSpec, distance: f64) -> Self {
        TruncationSpec {
            lmax: (4.0 * sphere.radius / distance - 1e-9).ceil() as usize + 2,
            n_orders: default_orders(grating.period, distance),
            n_kx: 12,
            n_ky: 24,
            ky_cutoff: 10.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lmax < 1 {
            return Err(Error::InvalidArgument("lmax must be at least 1".into()));
        }
        if self.n_kx < 1 || self.n_ky < 2 || self.n_ky % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "need n_kx >= 1 and an even n_ky >= 2, got {} and {}",
                self.n_kx, self.n_ky
            )));
        }
        if !(self.ky_cutoff >= 5.0) {
            return Err(Error::InvalidArgument(format!("ky cutoff must be at least 5, got {}", self.ky_cutoff)));
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        2 * lm_count(self.lmax)
    }

    pub fn k_max(&self, length: f64) -> f64 {
        (self.ky_cutoff + 2.0 * self.lmax as f64) / length
    }

    pub fn doubled(&self) -> Self {
        TruncationSpec {
            lmax: 2 * self.lmax,
            n_orders: 2 * self.n_orders,
            n_kx: 2 * self.n_kx,
            n_ky: 2 * self.n_ky,
            ky_cutoff: 2.0 * self.ky_cutoff,
        }
    }

    fn hash_into(&self, h: &mut Sha256) {
        for v in [self.lmax, self.n_orders, self.n_kx, self.n_ky] {
            h.update((v as u64).to_le_bytes());
        }
        h.update(self.ky_cutoff.to_le_bytes());
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Assembly {
    /// Mirror-parity blocks from k_y > 0 nodes only.
    #[default]
    Mirror,
    /// Every node, full complex matrix.
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeometrySnapshot {
    pub distance: f64,
    pub radius: f64,
    pub x_s: f64,
    pub reflector_hash: [u8; 32],
    pub sphere_hash: [u8; 32],
}

/// What the sphere faces.
#[derive(Clone, Copy, Debug)]
pub enum Reflector<'a> {
    Grating(&'a GratingSpec),
    /// Homogeneous half space reflecting through Fresnel amplitudes; `period`
    /// only sets the k_x cell used by Cartesian quadrature.
    Plane { material: &'a MaterialModel, period: f64 },
}

impl Reflector<'_> {
    fn period(&self) -> f64 {
        match self {
            Reflector::Grating(g) => g.period,
            Reflector::Plane { period, .. } => *period,
        }
    }

    fn translation(&self, x_s: f64) -> f64 {
        match self {
            Reflector::Grating(g) => (g.ridge_center() - x_s).rem_euclid(g.period),
            Reflector::Plane { .. } => 0.0,
        }
    }

    fn is_vacuum(&self) -> bool {
        match self {
            Reflector::Grating(g) => g.material.is_vacuum(),
            Reflector::Plane { material, .. } => material.is_vacuum(),
        }
    }

    fn hash(&self) -> [u8; 32] {
        match self {
            Reflector::Grating(g) => g.fingerprint(),
            Reflector::Plane { material, period } => {
                let mut h = Sha256::new();
                h.update(b"plane");
                h.update(material.fingerprint());
                h.update(period.to_le_bytes());
                h.finalize().into()
            }
        }
    }

    fn centered(
        &self,
        xi: f64,
        kx: f64,
        ky: f64,
        n_orders: usize,
        cache: Option<&ReflectionCache>,
    ) -> Result<Arc<ReflectionBlock>> {
        match self {
            Reflector::Grating(g) => match cache {
                Some(c) => c.centered(g, xi, kx, ky, n_orders),
                None => Ok(Arc::new(crate::rcwa::grating_reflection_centered(g, xi, kx, ky, n_orders)?)),
            },
            Reflector::Plane { material, period } => {
                Ok(Arc::new(fresnel_reflection(material, xi, kx, ky, n_orders, *period)?))
            }
        }
    }
}

/// One quadrature node; `weight` already carries the 1/(2π)² measure.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Node {
    pub kx: f64,
    pub ky: f64,
    pub weight: f64,
}

/// Brillouin-zone × k_y nodes, both graded toward the κ cusp at k = 0. With `mirror` only k_y > 0 is returned and the
/// weights count both signs of k_y.
pub fn cartesian_nodes(trunc: &TruncationSpec, period: f64, length: f64, mirror: bool) -> Vec<Node> {
    let kx = graded_symmetric(trunc.n_kx, PI / period);
    let ky = graded_from_zero(trunc.n_ky / 2, trunc.k_max(length));
    let norm = 1.0 / (4.0 * PI * PI);
    let mut out = Vec::with_capacity(kx.len() * trunc.n_ky);
    for &(x, wx) in &kx {
        for &(y, wy) in &ky {
            if mirror {
                out.push(Node { kx: x, ky: y, weight: 2.0 * wx * wy * norm });
            } else {
                out.push(Node { kx: x, ky: y, weight: wx * wy * norm });
                out.push(Node { kx: x, ky: -y, weight: wx * wy * norm });
            }
        }
    }
    out
}

/// Polar nodes over the whole k plane; the uniform angular rule integrates
/// `e^{i(m−m′)φ}` exactly for |m − m′| < `n_phi`.
pub fn polar_nodes(n_k: usize, n_phi: usize, k_max: f64) -> Vec<Node> {
    let radial = graded_from_zero(n_k, k_max);
    let dphi = 2.0 * PI / n_phi as f64;
    let mut out = Vec::with_capacity(n_k * n_phi);
    for &(k, w) in &radial {
        for j in 0..n_phi {
            let phi = (j as f64 + 0.5) * dphi;
            out.push(Node { kx: k * phi.cos(), ky: k * phi.sin(), weight: w * k * dphi / (4.0 * PI * PI) });
        }
    }
    out
}

/// Index of (ℓ, m, P) in the mode ordering `P·NL + j(ℓ, m)`.
pub fn mode_index(lmax: usize, l: usize, m: i64, pol: Multipole) -> usize {
    pol.index() * lm_count(lmax) + lm_index(l, m)
}

/// Orthonormal real combinations of (ℓ, ±m, P) that are even or odd under
/// the y → −y mirror, which maps |ℓ,m,P⟩ to σ_P(−1)^m |ℓ,−m,P⟩ with σ_E = −1, σ_M = +1.
#[derive(Clone, Debug, PartialEq)]
struct ParityBasis {
    blocks: [Vec<Vec<(usize, f64)>>; 2],
}

impl ParityBasis {
    fn new(lmax: usize) -> Self {
        let mut even = Vec::new();
        let mut odd = Vec::new();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for pol in Multipole::BOTH {
            let sigma = match pol {
                Multipole::E => -1.0,
                Multipole::M => 1.0,
            };
            for l in 1..=lmax {
                let i0 = mode_index(lmax, l, 0, pol);
                if sigma > 0.0 {
                    even.push(vec![(i0, 1.0)]);
                } else {
                    odd.push(vec![(i0, 1.0)]);
                }
                for m in 1..=l as i64 {
                    let s = sigma * if m % 2 == 0 { 1.0 } else { -1.0 };
                    let ip = mode_index(lmax, l, m, pol);
                    let im = mode_index(lmax, l, -m, pol);
                    even.push(vec![(ip, h), (im, s * h)]);
                    odd.push(vec![(ip, h), (im, -s * h)]);
                }
            }
        }
        ParityBasis { blocks: [even, odd] }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Layout {
    Full,
    Mirror(Arc<ParityBasis>),
}

/// `√|r_ℓP|` and sign per (P, ℓ).
#[derive(Clone, Debug, PartialEq)]
struct MieScale {
    lmax: usize,
    sqrt: Vec<ScaledReal>,
    sign: Vec<f64>,
}

impl MieScale {
    fn new(sphere: &SphereSpec, xi: f64, lmax: usize) -> Result<Self> {
        let mie = mie_coefficients(sphere, xi, lmax)?;
        let mut sqrt = Vec::with_capacity(2 * lmax);
        let mut sign = Vec::with_capacity(2 * lmax);
        for pol in Multipole::BOTH {
            for l in 1..=lmax {
                let r = mie.scaled(l, pol);
                sqrt.push(r.abs().sqrt());
                sign.push(if r.signum() < 0.0 { -1.0 } else { 1.0 });
            }
        }
        Ok(MieScale { lmax, sqrt, sign })
    }

    fn at(&self, l: usize, pol: Multipole) -> (ScaledReal, f64) {
        let i = pol.index() * self.lmax + l - 1;
        (self.sqrt[i], self.sign[i])
    }

    fn is_zero(&self) -> bool {
        self.sqrt.iter().all(|s| s.is_zero())
    }

    fn at_mode(&self, index: usize) -> ScaledReal {
        let nl = lm_count(self.lmax);
        let pol = if index < nl { Multipole::E } else { Multipole::M };
        let (l, _) = lm_from_index(index % nl);
        self.at(l, pol).0
    }
}

/// Round-trip operator at one Matsubara frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundTripMatrix {
    pub xi: f64,
    pub lmax: usize,
    pub trunc: TruncationSpec,
    pub geometry: GeometrySnapshot,
    blocks: Vec<DMatrix<Complex64>>,
    layout: Layout,
    mie: MieScale,
}

impl RoundTripMatrix {
    pub fn dimension(&self) -> usize {
        2 * lm_count(self.lmax)
    }

    pub fn is_zero(&self) -> bool {
        self.blocks.iter().all(|b| b.iter().all(|z| *z == Complex64::new(0.0, 0.0)))
    }

    /// Diagonal blocks in the storage basis (one for [`Assembly::Full`], even
    /// and odd mirror parity for [`Assembly::Mirror`]).
    pub fn blocks(&self) -> &[DMatrix<Complex64>] {
        &self.blocks
    }

    /// `S⁻¹ M S` in the (ℓ, m, P) mode basis.
    pub fn balanced(&self) -> DMatrix<Complex64> {
        match &self.layout {
            Layout::Full => self.blocks[0].clone(),
            Layout::Mirror(basis) => {
                let n = self.dimension();
                let mut full = DMatrix::zeros(n, n);
                for (vectors, block) in basis.blocks.iter().zip(&self.blocks) {
                    for (a, va) in vectors.iter().enumerate() {
                        for (b, vb) in vectors.iter().enumerate() {
                            let v = block[(a, b)];
                            for &(i, ci) in va {
                                for &(j, cj) in vb {
                                    full[(i, j)] += v * (ci * cj);
                                }
                            }
                        }
                    }
                }
                full
            }
        }
    }

    /// `M` itself, rows scaled by the Mie amplitudes.
    pub fn entries(&self) -> DMatrix<Complex64> {
        let mut m = self.balanced();
        let n = self.dimension();
        let s: Vec<ScaledReal> = (0..n).map(|i| self.mie.at_mode(i)).collect();
        for j in 0..n {
            for i in 0..n {
                let v = m[(i, j)];
                m[(i, j)] = if s[j].is_zero() || v.norm() == 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    v * (s[i] / s[j]).to_f64()
                };
            }
        }
        m
    }

    /// Largest |λ| estimated by power iteration on each block.
    pub fn spectral_radius(&self) -> f64 {
        self.blocks.iter().map(power_iteration).fold(0.0, f64::max)
    }

    /// SHA-256 over geometry, truncation and frequency.
    pub fn content_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.xi.to_le_bytes());
        self.trunc.hash_into(&mut h);
        let g = &self.geometry;
        for v in [g.distance, g.radius, g.x_s] {
            h.update(v.to_le_bytes());
        }
        h.update(g.reflector_hash);
        h.update(g.sphere_hash);
        h.finalize().into()
    }

    /// Binary snapshot: magic, content hash, parameters, Mie scales, blocks.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&self.content_hash())?;
        let g = &self.geometry;
        for v in [self.xi, g.distance, g.radius, g.x_s, self.trunc.ky_cutoff] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in [self.lmax, self.trunc.lmax, self.trunc.n_orders, self.trunc.n_kx, self.trunc.n_ky] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        w.write_all(&g.reflector_hash)?;
        w.write_all(&g.sphere_hash)?;
        w.write_all(&[matches!(self.layout, Layout::Mirror(_)) as u8])?;
        for (s, sign) in self.mie.sqrt.iter().zip(&self.mie.sign) {
            w.write_all(&s.mantissa().to_le_bytes())?;
            w.write_all(&s.exponent().to_le_bytes())?;
            w.write_all(&sign.to_le_bytes())?;
        }
        w.write_all(&(self.blocks.len() as u64).to_le_bytes())?;
        for b in &self.blocks {
            w.write_all(&(b.nrows() as u64).to_le_bytes())?;
            for z in b.iter() {
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_snapshot<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(Error::Parse("not a round-trip snapshot (bad magic or version)".into()));
        }
        let mut hash = [0u8; 32];
        r.read_exact(&mut hash)?;
        let f = |r: &mut R| -> Result<f64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(f64::from_le_bytes(b))
        };
        let u = |r: &mut R| -> Result<u64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(u64::from_le_bytes(b))
        };
        let xi = f(&mut r)?;
        let distance = f(&mut r)?;
        let radius = f(&mut r)?;
        let x_s = f(&mut r)?;
        let ky_cutoff = f(&mut r)?;
        let lmax = u(&mut r)? as usize;
        let trunc = TruncationSpec {
            lmax: u(&mut r)? as usize,
            n_orders: u(&mut r)? as usize,
            n_kx: u(&mut r)? as usize,
            n_ky: u(&mut r)? as usize,
            ky_cutoff,
        };
        if lmax == 0 || lmax > 10_000 {
            return Err(Error::Parse(format!("implausible lmax {lmax} in snapshot")));
        }
        let mut reflector_hash = [0u8; 32];
        r.read_exact(&mut reflector_hash)?;
        let mut sphere_hash = [0u8; 32];
        r.read_exact(&mut sphere_hash)?;
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let layout = match tag[0] {
            0 => Layout::Full,
            1 => Layout::Mirror(Arc::new(ParityBasis::new(lmax))),
            t => return Err(Error::Parse(format!("unknown layout tag {t}"))),
        };
        let mut sqrt = Vec::with_capacity(2 * lmax);
        let mut sign = Vec::with_capacity(2 * lmax);
        for _ in 0..2 * lmax {
            let m = f(&mut r)?;
            let e = u(&mut r)? as i64;
            sqrt.push(ScaledReal::from_parts(m, e));
            sign.push(f(&mut r)?);
        }
        let count = u(&mut r)? as usize;
        let expected = if matches!(layout, Layout::Full) { 1 } else { 2 };
        if count != expected {
            return Err(Error::Parse(format!("expected {expected} blocks, found {count}")));
        }
        let mut blocks = Vec::with_capacity(count);
        for _ in 0..count {
            let n = u(&mut r)? as usize;
            if n > 2 * lm_count(lmax) {
                return Err(Error::Parse(format!("block size {n} exceeds the mode count")));
            }
            let mut data = Vec::with_capacity(n * n);
            for _ in 0..n * n {
                let re = f(&mut r)?;
                let im = f(&mut r)?;
                data.push(Complex64::new(re, im));
            }
            blocks.push(DMatrix::from_vec(n, n, data));
        }
        let out = RoundTripMatrix {
            xi,
            lmax,
            trunc,
            geometry: GeometrySnapshot { distance, radius, x_s, reflector_hash, sphere_hash },
            blocks,
            layout,
            mie: MieScale { lmax, sqrt, sign },
        };
        if out.content_hash() != hash {
            return Err(Error::Parse("snapshot header hash does not match its contents".into()));
        }
        Ok(out)
    }
}

fn power_iteration(m: &DMatrix<Complex64>) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = nalgebra::DVector::from_fn(n, |i, _| Complex64::new(1.0 + (i as f64 * 0.618_034).fract(), 0.3));
    let mut log_growth = Vec::new();
    for _ in 0..200 {
        let norm = v.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v /= Complex64::new(norm, 0.0);
        let w = m * &v;
        let g = w.norm();
        if g == 0.0 {
            return 0.0;
        }
        log_growth.push(g.ln());
        v = w;
    }
    let tail = &log_growth[log_growth.len() - 50..];
    (tail.iter().sum::<f64>() / tail.len() as f64).exp()
}

/// Complex `log det A` from a partially pivoted LU factorization.
pub fn log_det(a: &DMatrix<Complex64>) -> Result<Complex64> {
    let n = a.nrows();
    if n == 0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let lu = a.clone().lu();
    let sign: f64 = lu.p().determinant();
    let u = lu.u();
    let mut acc = Complex64::new(0.0, if sign < 0.0 { PI } else { 0.0 });
    for i in 0..n {
        let d = u[(i, i)];
        if d.norm() == 0.0 {
            return Err(Error::Singular("zero pivot in log-det".into()));
        }
        acc += d.ln();
    }
    Ok(acc)
}

/// `log det(1 − M)`; fails when the spectral radius is not below one or the
/// result carries an imaginary part beyond 10⁻⁸ of its real part.
pub fn log_det_one_minus(m: &RoundTripMatrix) -> Result<f64> {
    if m.is_zero() {
        return Ok(0.0);
    }
    let rho = m.spectral_radius();
    if !(rho < 1.0) {
        return Err(Error::SpectralRadius { rho, xi: m.xi });
    }
    let mut total = Complex64::new(0.0, 0.0);
    for b in &m.blocks {
        let n = b.nrows();
        let a = DMatrix::<Complex64>::identity(n, n) - b;
        total += log_det(&a)?;
    }
    let imag = (total.im + PI).rem_euclid(2.0 * PI) - PI;
    if (imag.abs() - PI).abs() < 1e-6 {
        return Err(Error::NonPositiveDeterminant(-total.re.exp()));
    }
    if imag.abs() > (1e-8 * total.re.abs()).max(1e-14) {
        return Err(Error::ImaginaryResidue { real: total.re, imag });
    }
    Ok(total.re)
}

struct NodeFactors {
    /// rows: modes, cols: (n, p) in ReflectionBlock order
    a: DMatrix<Complex64>,
    /// rows: (n, p), cols: modes
    b: DMatrix<Complex64>,
}

#[allow(clippy::too_many_arguments)]
fn node_factors(
    xi: f64,
    node: &Node,
    n_orders: usize,
    period: f64,
    length: f64,
    lmax: usize,
    mie: &MieScale,
    modes: &[(usize, i64, Multipole)],
) -> Result<NodeFactors> {
    let no = 2 * n_orders + 1;
    let dim = modes.len();
    let mut a = DMatrix::zeros(dim, 2 * no);
    let mut b = DMatrix::zeros(2 * no, dim);
    let lm = lmax as i64;
    for (cn, n) in (-(n_orders as i64)..=n_orders as i64).enumerate() {
        let kxn = if n == 0 { node.kx } else { node.kx + 2.0 * PI * n as f64 / period };
        let kap = kappa(xi, kxn, node.ky);
        let tr = ScaledReal::exp(-kap * length);
        let kr = kernels_reg(lmax, xi, kxn, node.ky, Direction::Up)?;
        let ko = kernels_out(lmax, xi, kxn, node.ky, Direction::Down)?;
        let az_r: Vec<Complex64> = (-lm..=lm).map(|m| kr.azimuthal(m)).collect();
        let az_o: Vec<Complex64> = (-lm..=lm).map(|m| ko.azimuthal(m)).collect();
        for p in Polarization::BOTH {
            let col = p.index() * no + cn;
            for (i, &(l, m, pol)) in modes.iter().enumerate() {
                let (sr, sign) = mie.at(l, pol);
                if sr.is_zero() {
                    continue;
                }
                let scale = sr * tr;
                let v = kr.raw(p, pol, l, m);
                a[(i, col)] = v.phase.to_complex() * (v.magnitude * scale).to_f64() * sign * az_r[(m + lm) as usize];
                let v = ko.raw(p, pol, l, m);
                b[(col, i)] = v.phase.to_complex() * (v.magnitude * scale).to_f64() * az_o[(m + lm) as usize];
            }
        }
    }
    Ok(NodeFactors { a, b })
}

fn combine_rows(a: &DMatrix<Complex64>, vectors: &[Vec<(usize, f64)>]) -> DMatrix<Complex64> {
    let mut out = DMatrix::zeros(vectors.len(), a.ncols());
    for (r, v) in vectors.iter().enumerate() {
        for &(i, c) in v {
            for j in 0..a.ncols() {
                out[(r, j)] += a[(i, j)] * c;
            }
        }
    }
    out
}

fn combine_cols(b: &DMatrix<Complex64>, vectors: &[Vec<(usize, f64)>]) -> DMatrix<Complex64> {
    let mut out = DMatrix::zeros(b.nrows(), vectors.len());
    for (c, v) in vectors.iter().enumerate() {
        for &(j, w) in v {
            for i in 0..b.nrows() {
                out[(i, c)] += b[(i, j)] * w;
            }
        }
    }
    out
}

/// Re/Im accumulator fed by real GEMMs.
struct SplitAcc {
    re: DMatrix<f64>,
    im: DMatrix<f64>,
}

impl SplitAcc {
    fn zeros(n: usize) -> Self {
        SplitAcc { re: DMatrix::zeros(n, n), im: DMatrix::zeros(n, n) }
    }

    /// `self += A·B` with both factors held as real and imaginary parts.
    fn add_split(&mut self, a: &Split, b: &Split) {
        self.re.gemm(1.0, &a.re, &b.re, 1.0);
        self.re.gemm(-1.0, &a.im, &b.im, 1.0);
        self.im.gemm(1.0, &a.re, &b.im, 1.0);
        self.im.gemm(1.0, &a.im, &b.re, 1.0);
    }

    fn add(&mut self, other: &SplitAcc) {
        self.re += &other.re;
        self.im += &other.im;
    }

    fn into_complex(self) -> DMatrix<Complex64> {
        self.re.zip_map(&self.im, Complex64::new)
    }
}

/// Complex matrix as separate real and imaginary parts.
struct Split {
    re: DMatrix<f64>,
    im: DMatrix<f64>,
}

impl Split {
    fn zeros(r: usize, c: usize) -> Self {
        Split { re: DMatrix::zeros(r, c), im: DMatrix::zeros(r, c) }
    }

    fn from(m: &DMatrix<Complex64>) -> Self {
        Split { re: m.map(|z| z.re), im: m.map(|z| z.im) }
    }
}

/// `R_t·B` with `R_t = Φ* R Φ`, `Φ = diag(e^{i k_{x,n} t})`; a real centered
/// block goes through real GEMMs.
fn shifted_product(rc: &ReflectionBlock, b: &DMatrix<Complex64>, t: f64, orders: usize) -> Split {
    if rc.max_imag_ratio() > 1e-12 {
        let r = if t == 0.0 { rc.entries.clone() } else { apply_lateral_shift(rc, t).entries };
        return Split::from(&(r * b));
    }
    let rr = rc.entries.map(|z| z.re);
    if t == 0.0 {
        let bs = Split::from(b);
        return Split { re: &rr * &bs.re, im: &rr * &bs.im };
    }
    let phase: Vec<Complex64> = rc
        .orders()
        .map(|n| {
            let frac = (n as f64 * t / rc.period).rem_euclid(1.0);
            Complex64::from_polar(1.0, rc.kx * t + 2.0 * PI * frac)
        })
        .collect();
    let mut db = Split::zeros(b.nrows(), b.ncols());
    for j in 0..b.ncols() {
        for i in 0..b.nrows() {
            let z = phase[i % orders] * b[(i, j)];
            db.re[(i, j)] = z.re;
            db.im[(i, j)] = z.im;
        }
    }
    let mut out = Split { re: &rr * &db.re, im: &rr * &db.im };
    for j in 0..b.ncols() {
        for i in 0..b.nrows() {
            let z = phase[i % orders].conj() * Complex64::new(out.re[(i, j)], out.im[(i, j)]);
            out.re[(i, j)] = z.re;
            out.im[(i, j)] = z.im;
        }
    }
    out
}

/// Round-trip matrices at one frequency for several sphere positions sharing
/// the kernel and centered-grating work.
#[allow(clippy::too_many_arguments)]
pub fn assemble_with_nodes(
    xi: f64,
    sphere: &SphereSpec,
    reflector: Reflector<'_>,
    distance: f64,
    positions: &[f64],
    trunc: &TruncationSpec,
    nodes: &[Node],
    assembly: Assembly,
    cache: Option<&ReflectionCache>,
) -> Result<Vec<RoundTripMatrix>> {
    if !(distance > 0.0) {
        return Err(Error::InvalidArgument(format!("distance must be positive, got {distance}")));
    }
    if !(xi > 0.0) {
        return Err(Error::InvalidArgument(format!("xi must be positive, got {xi}")));
    }
    trunc.validate()?;
    let lmax = trunc.lmax;
    let nl = lm_count(lmax);
    let length = distance + sphere.radius;
    let period = reflector.period();
    let mie = MieScale::new(sphere, xi, lmax)?;
    let layout = match assembly {
        Assembly::Full => Layout::Full,
        Assembly::Mirror => Layout::Mirror(Arc::new(ParityBasis::new(lmax))),
    };
    let block_vectors: Vec<Vec<Vec<(usize, f64)>>> = match &layout {
        Layout::Full => vec![(0..2 * nl).map(|i| vec![(i, 1.0)]).collect()],
        Layout::Mirror(b) => b.blocks.to_vec(),
    };
    let geometry = |x_s: f64| GeometrySnapshot {
        distance,
        radius: sphere.radius,
        x_s,
        reflector_hash: reflector.hash(),
        sphere_hash: sphere.material.fingerprint(),
    };
    let build = |blocks: Vec<DMatrix<Complex64>>, x_s: f64| RoundTripMatrix {
        xi,
        lmax,
        trunc: *trunc,
        geometry: geometry(x_s),
        blocks,
        layout: layout.clone(),
        mie: mie.clone(),
    };
    if mie.is_zero() || reflector.is_vacuum() {
        return Ok(positions
            .iter()
            .map(|&x| build(block_vectors.iter().map(|v| DMatrix::zeros(v.len(), v.len())).collect(), x))
            .collect());
    }

    let modes: Vec<(usize, i64, Multipole)> = (0..2 * nl)
        .map(|i| {
            let pol = if i < nl { Multipole::E } else { Multipole::M };
            let (l, m) = lm_from_index(i % nl);
            (l, m, pol)
        })
        .collect();
    let shifts: Vec<f64> = positions.iter().map(|&x| reflector.translation(x)).collect();
    let n_orders = trunc.n_orders;

    // fixed chunking keeps the reduction order independent of the thread count
    let partials: Vec<Result<Vec<Vec<SplitAcc>>>> = nodes
        .par_chunks(CHUNK)
        .map(|chunk| {
            let pdim = 2 * (2 * n_orders + 1);
            let orders = 2 * n_orders + 1;
            let mut prepared = Vec::with_capacity(chunk.len());
            for node in chunk {
                let f = node_factors(xi, node, n_orders, period, length, lmax, &mie, &modes)?;
                let rc = reflector.centered(xi, node.kx, node.ky, n_orders, cache)?;
                prepared.push((f, rc));
            }
            let mut acc: Vec<Vec<SplitAcc>> = shifts
                .iter()
                .map(|_| block_vectors.iter().map(|v| SplitAcc::zeros(v.len())).collect())
                .collect();
            for (bi, vectors) in block_vectors.iter().enumerate() {
                let dim = vectors.len();
                let mut a_stack = DMatrix::<Complex64>::zeros(dim, pdim * chunk.len());
                let mut bs = Vec::with_capacity(chunk.len());
                for (k, (f, _)) in prepared.iter().enumerate() {
                    let (a, b) = match &layout {
                        Layout::Full => (f.a.clone(), f.b.clone()),
                        Layout::Mirror(_) => (combine_rows(&f.a, vectors), combine_cols(&f.b, vectors)),
                    };
                    a_stack.columns_mut(k * pdim, pdim).copy_from(&(a * Complex64::new(chunk[k].weight, 0.0)));
                    bs.push(b);
                }
                let a_split = Split::from(&a_stack);
                let mut b_stack = Split::zeros(pdim * chunk.len(), dim);
                for (s, &t) in shifts.iter().enumerate() {
                    for (k, ((_, rc), b)) in prepared.iter().zip(&bs).enumerate() {
                        let rb = shifted_product(rc, b, t, orders);
                        b_stack.re.rows_mut(k * pdim, pdim).copy_from(&rb.re);
                        b_stack.im.rows_mut(k * pdim, pdim).copy_from(&rb.im);
                    }
                    acc[s][bi].add_split(&a_split, &b_stack);
                }
            }
            Ok(acc)
        })
        .collect();

    let mut total: Option<Vec<Vec<SplitAcc>>> = None;
    for p in partials {
        let p = p?;
        match &mut total {
            None => total = Some(p),
            Some(t) => {
                for (ts, ps) in t.iter_mut().zip(&p) {
                    for (tb, pb) in ts.iter_mut().zip(ps) {
                        tb.add(pb);
                    }
                }
            }
        }
    }
    let total = total.unwrap_or_else(|| {
        shifts.iter().map(|_| block_vectors.iter().map(|v| SplitAcc::zeros(v.len())).collect()).collect()
    });
    Ok(total
        .into_iter()
        .zip(positions)
        .map(|(blocks, &x)| build(blocks.into_iter().map(SplitAcc::into_complex).collect(), x))
        .collect())
}

/// `M(iξ)` for the sphere at lateral position `x_s` above the grating.
pub fn assemble_roundtrip(
    xi: f64,
    sphere: &SphereSpec,
    grating: &GratingSpec,
    distance: f64,
    x_s: f64,
    trunc: &TruncationSpec,
) -> Result<RoundTripMatrix> {
    let mut v = assemble_positions(xi, sphere, grating, distance, &[x_s], trunc, Assembly::Mirror, None)?;
    Ok(v.remove(0))
}

/// Several lateral positions at once on the Cartesian grid.
#[allow(clippy::too_many_arguments)]
pub fn assemble_positions(
    xi: f64,
    sphere: &SphereSpec,
    grating: &GratingSpec,
    distance: f64,
    positions: &[f64],
    trunc: &TruncationSpec,
    assembly: Assembly,
    cache: Option<&ReflectionCache>,
) -> Result<Vec<RoundTripMatrix>> {
    grating.validate()?;
    let nodes = cartesian_nodes(trunc, grating.period, distance + sphere.radius, assembly == Assembly::Mirror);
    assemble_with_nodes(xi, sphere, Reflector::Grating(grating), distance, positions, trunc, &nodes, assembly, cache)
}

/// First Matsubara frequency at temperature `t`.
pub fn first_matsubara(t: f64) -> f64 {
    2.0 * PI * K_B * t / HBAR
}

fn term(xi: f64, sphere: &SphereSpec, grating: &GratingSpec, d: f64, x_s: f64, trunc: &TruncationSpec) -> Result<f64> {
    log_det_one_minus(&assemble_roundtrip(xi, sphere, grating, d, x_s, trunc)?)
}

/// Doubles ℓ_max, N, n_kx, n_ky and Λ one at a time, starting from
/// [`TruncationSpec::seed`], until the term at ξ₁ (T = 300 K, sphere above the
/// ridge center) moves by less than `tolerance/3`.
pub fn auto_truncate(sphere: &SphereSpec, grating: &GratingSpec, distance: f64, tolerance: f64) -> Result<TruncationSpec> {
    let seed = TruncationSpec::seed(sphere, grating, distance);
    auto_truncate_from(sphere, grating, distance, grating.ridge_center(), first_matsubara(300.0), tolerance, seed)
}

#[allow(clippy::too_many_arguments)]
pub fn auto_truncate_from(
    sphere: &SphereSpec,
    grating: &GratingSpec,
    distance: f64,
    x_s: f64,
    xi: f64,
    tolerance: f64,
    seed: TruncationSpec,
) -> Result<TruncationSpec> {
    if !(tolerance > 1e-6 && tolerance < 1e-1) {
        return Err(Error::InvalidArgument(format!("tolerance must lie in (1e-6, 1e-1), got {tolerance}")));
    }
    let mut spec = seed;
    let mut current = term(xi, sphere, grating, distance, x_s, &spec)?;
    type Step = fn(&mut TruncationSpec);
    let steps: [Step; 5] = [
        |s| s.lmax *= 2,
        |s| s.n_orders *= 2,
        |s| s.n_kx *= 2,
        |s| s.n_ky *= 2,
        |s| s.ky_cutoff *= 2.0,
    ];
    for step in steps {
        let mut converged = false;
        for _ in 0..6 {
            let mut next = spec;
            step(&mut next);
            let value = term(xi, sphere, grating, distance, x_s, &next)?;
            let change = (value - current).abs();
            log::debug!("auto_truncate {next:?}: term {value:e}, change {change:e}");
            if change < tolerance / 3.0 * value.abs() {
                converged = true;
                break;
            }
            spec = next;
            current = value;
        }
        if !converged {
            return Err(Error::NoConvergence(6));
        }
    }
    Ok(spec)
}

/// Plane half-space instead of a grating, for symmetry checks.
pub fn assemble_plane(
    xi: f64,
    sphere: &SphereSpec,
    plane: &MaterialModel,
    distance: f64,
    trunc: &TruncationSpec,
    nodes: &[Node],
    period: f64,
) -> Result<RoundTripMatrix> {
    let mut v = assemble_with_nodes(
        xi,
        sphere,
        Reflector::Plane { material: plane, period },
        distance,
        &[0.0],
        trunc,
        nodes,
        Assembly::Full,
        None,
    )?;
    Ok(v.remove(0))
}

/// Wave number `ξ/c`.
pub fn vacuum_wavenumber(xi: f64) -> f64 {
    xi / C
}
