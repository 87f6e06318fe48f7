//! Dielectric functions on the imaginary frequency axis.

use std::f64::consts::PI;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::constants::ev_to_rad_per_s;
use crate::{Error, Result};

const SILICA_TABLE: &str = include_str!("../data/silica_eps_ixi.dat");

/// Grid used by [`kk_transform`]: 200 log-spaced points on [1e11, 1e18] rad/s.
pub const KK_GRID_MIN: f64 = 1e11;
pub const KK_GRID_MAX: f64 = 1e18;
pub const KK_GRID_POINTS: usize = 200;

/// One damped Lorentz resonance contributing `f ω₀²/(ω₀² + ξ² + γξ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Oscillator {
    pub strength: f64,
    pub resonance: f64,
    pub damping: f64,
}

/// ε(iξ) sampled on a strictly increasing frequency grid.
#[derive(Clone, Debug, PartialEq)]
pub struct TabulatedCurve {
    xi: Vec<f64>,
    eps: Vec<f64>,
}

impl TabulatedCurve {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCurve);
        }
        if points.len() < 2 {
            return Err(Error::InvalidArgument("tabulated curve needs at least two points".into()));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) || points[0].0 <= 0.0 {
            return Err(Error::NonMonotoneGrid);
        }
        if points.iter().any(|p| !(p.1 >= 1.0) || !p.1.is_finite()) {
            return Err(Error::InvalidArgument("tabulated permittivity must be finite and >= 1".into()));
        }
        let (xi, eps) = points.into_iter().unzip();
        Ok(TabulatedCurve { xi, eps })
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xi.iter().copied().zip(self.eps.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    fn eval(&self, xi: f64) -> Result<f64> {
        let n = self.xi.len();
        let last = self.xi[n - 1];
        if xi <= self.xi[0] {
            return Ok(self.eps[0]);
        }
        if xi >= last {
            if xi > 10.0 * last {
                return Err(Error::OutOfRange(xi));
            }
            let c = (self.eps[n - 1] - 1.0) * last * last;
            return Ok(1.0 + c / (xi * xi));
        }
        let j = self.xi.partition_point(|&x| x <= xi);
        let (x0, x1) = (self.xi[j - 1], self.xi[j]);
        let (e0, e1) = (self.eps[j - 1] - 1.0, self.eps[j] - 1.0);
        if e0 <= 0.0 || e1 <= 0.0 {
            let t = (xi - x0) / (x1 - x0);
            return Ok(1.0 + e0 + t * (e1 - e0));
        }
        let t = (xi / x0).ln() / (x1 / x0).ln();
        Ok(1.0 + (e0.ln() + t * (e1 / e0).ln()).exp())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MaterialModel {
    Vacuum,
    /// Frequency-independent permittivity (used for ideal-mirror surrogates and tests).
    Constant(f64),
    Drude { omega_p: f64, gamma: f64 },
    Tabulated(TabulatedCurve),
    LorentzOscillators(Vec<Oscillator>),
}

impl MaterialModel {
    /// Gold with ω_P = 9 eV and γ = 35 meV.
    pub fn gold() -> Self {
        MaterialModel::Drude { omega_p: ev_to_rad_per_s(9.0), gamma: ev_to_rad_per_s(0.035) }
    }

    /// Bundled fused-silica curve.
    pub fn silica() -> Self {
        MaterialModel::Tabulated(parse_tabulated(SILICA_TABLE).expect("bundled silica table is valid"))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(MaterialModel::Tabulated(parse_tabulated(&text)?))
    }

    pub fn is_vacuum(&self) -> bool {
        match self {
            MaterialModel::Vacuum => true,
            MaterialModel::Constant(e) => *e == 1.0,
            MaterialModel::Drude { omega_p, .. } => *omega_p == 0.0,
            MaterialModel::Tabulated(c) => c.eps.iter().all(|&e| e == 1.0),
            MaterialModel::LorentzOscillators(o) => o.iter().all(|o| o.strength == 0.0),
        }
    }

    pub fn permittivity(&self, xi: f64) -> Result<f64> {
        permittivity(self, xi)
    }

    /// SHA-256 over a canonical byte encoding of the model parameters.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        match self {
            MaterialModel::Vacuum => h.update(b"vacuum"),
            MaterialModel::Constant(e) => {
                h.update(b"constant");
                h.update(e.to_le_bytes());
            }
            MaterialModel::Drude { omega_p, gamma } => {
                h.update(b"drude");
                h.update(omega_p.to_le_bytes());
                h.update(gamma.to_le_bytes());
            }
            MaterialModel::Tabulated(c) => {
                h.update(b"tabulated");
                for (x, e) in c.points() {
                    h.update(x.to_le_bytes());
                    h.update(e.to_le_bytes());
                }
            }
            MaterialModel::LorentzOscillators(os) => {
                h.update(b"lorentz");
                for o in os {
                    h.update(o.strength.to_le_bytes());
                    h.update(o.resonance.to_le_bytes());
                    h.update(o.damping.to_le_bytes());
                }
            }
        }
        h.finalize().into()
    }
}

/// ε(iξ) for the given model.
pub fn permittivity(model: &MaterialModel, xi: f64) -> Result<f64> {
    if xi < 0.0 || xi.is_nan() {
        return Err(Error::InvalidArgument(format!("negative frequency {xi}")));
    }
    match model {
        MaterialModel::Vacuum => Ok(1.0),
        MaterialModel::Constant(e) => Ok(*e),
        MaterialModel::Drude { omega_p, gamma } => {
            if *omega_p == 0.0 {
                return Ok(1.0);
            }
            if xi == 0.0 {
                return Ok(f64::INFINITY);
            }
            Ok(1.0 + omega_p * omega_p / (xi * (xi + gamma)))
        }
        MaterialModel::Tabulated(c) => c.eval(xi),
        MaterialModel::LorentzOscillators(os) => Ok(1.0
            + os.iter()
                .map(|o| {
                    let w2 = o.resonance * o.resonance;
                    o.strength * w2 / (w2 + xi * xi + o.damping * xi)
                })
                .sum::<f64>()),
    }
}

/// Parses the two-column `xi_rad_per_s eps_i_xi` format; `#` starts a comment line.
pub fn parse_tabulated(text: &str) -> Result<TabulatedCurve> {
    let mut pts = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split_whitespace();
        let mut next = || -> Result<f64> {
            cols.next()
                .ok_or_else(|| Error::Parse(format!("line {}: expected two columns", no + 1)))?
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", no + 1)))
        };
        let xi = next()?;
        let eps = next()?;
        pts.push((xi, eps));
    }
    TabulatedCurve::new(pts)
}

fn interval_integral(w1: f64, w2: f64, e1: f64, e2: f64, xi: f64) -> f64 {
    // ∫ ω (a + bω)/(ω²+ξ²) dω with ε'' linear on [w1, w2]
    let b = (e2 - e1) / (w2 - w1);
    let a = e1 - b * w1;
    let d1 = w1 * w1 + xi * xi;
    let log_term = 0.5 * a * ((w2 * w2 - w1 * w1) / d1).ln_1p();
    let lin_term = if xi == 0.0 {
        b * (w2 - w1)
    } else {
        let datan = ((w2 - w1) * xi).atan2(xi * xi + w1 * w2);
        b * ((w2 - w1) - xi * datan)
    };
    log_term + lin_term
}

fn tail_integral(wn: f64, en: f64, slope: f64, xi: f64) -> f64 {
    // ε'' = en (ω/wn)^(-slope) beyond the grid, ω = wn/u²
    if slope <= 0.5 || en == 0.0 {
        return 0.0;
    }
    let gl = crate::quadrature::gauss_legendre(48);
    gl.iter()
        .map(|&(x, w)| {
            let u = 0.5 * (x + 1.0);
            let t = u * u;
            let omega = wn / t;
            let eps2 = en * t.powf(slope);
            let f = omega * eps2 / (omega * omega + xi * xi);
            0.5 * w * f * wn / (t * t) * 2.0 * u
        })
        .sum()
}

/// Kramers–Kronig transform of a loss spectrum onto the imaginary axis.
///
/// `ε''` is interpolated linearly between grid points, `ω ε''` is held constant
/// below the first point and `ε''` is continued as a power law beyond the last.
pub fn kk_transform(loss: &[(f64, f64)]) -> Result<MaterialModel> {
    if loss.is_empty() {
        return Err(Error::EmptyCurve);
    }
    if loss.windows(2).any(|w| w[1].0 <= w[0].0) || loss[0].0 <= 0.0 {
        return Err(Error::NonMonotoneGrid);
    }
    if let Some(&(omega, value)) = loss.iter().find(|p| p.1 < 0.0 || p.1.is_nan()) {
        return Err(Error::NegativeLoss { omega, value });
    }
    let n = loss.len();
    let slope = if n >= 2 && loss[n - 1].1 > 0.0 && loss[n - 2].1 > 0.0 {
        -(loss[n - 1].1 / loss[n - 2].1).ln() / (loss[n - 1].0 / loss[n - 2].0).ln()
    } else {
        0.0
    };
    let grid = log_grid(KK_GRID_MIN, KK_GRID_MAX, KK_GRID_POINTS);
    let mut pts = Vec::with_capacity(grid.len());
    for &xi in &grid {
        let (w0, e0) = loss[0];
        let c = w0 * e0;
        let mut acc = c / xi * (w0 / xi).atan();
        for w in loss.windows(2) {
            acc += interval_integral(w[0].0, w[1].0, w[0].1, w[1].1, xi);
        }
        acc += tail_integral(loss[n - 1].0, loss[n - 1].1, slope, xi);
        pts.push((xi, 1.0 + 2.0 / PI * acc));
    }
    Ok(MaterialModel::Tabulated(TabulatedCurve::new(pts)?))
}

/// `n` log-spaced points on `[a, b]`.
pub fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    let (la, lb) = (a.ln(), b.ln());
    (0..n).map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp()).collect()
}
