//! Run configuration: TOML schema, overrides and validation.
//!
//! All lengths are in meters, the temperature in kelvin.
//!
//! ```toml
//! cache_dir = "cache"          # optional
//!
//! [geometry]
//! d = 1.0e-6
//! R_S = 5.0e-6
//! x_S = 1.5e-7                 # optional, defaults to the ridge center fD/2
//!
//! [grating]
//! D = 1.0e-6
//! h = 5.0e-7
//! f = 0.3
//! material = "silica"
//!
//! [sphere]
//! material = "gold"
//!
//! [thermal]
//! T = 300.0
//!
//! [numerics]
//! tol = 1e-3
//! deterministic = false
//! auto_truncate = false
//! [numerics.truncation]        # optional overrides of the seed spec
//! lmax = 24
//!
//! [sweep]                      # optional
//! variable = "d"               # d, x_S, f, h or R_S
//! values = [1.0e-6, 1.5e-6, 2.0e-6]
//!
//! [output]
//! path = "results.csv"
//! format = "csv"               # csv or json
//! ledger = false
//! force = false
//! eta_double = false
//! ```
//!
//! Material references: `gold`, `silica`, `vacuum`, `constant:<eps>`,
//! `drude:<omega_p eV>,<gamma eV>` or `file:<path>` for a tabulated curve.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;
use sgcasimir::constants::ev_to_rad_per_s;
use sgcasimir::materials::MaterialModel;
use sgcasimir::roundtrip::TruncationSpec;

use crate::CliError;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: Geometry,
    pub grating: Grating,
    pub sphere: Sphere,
    #[serde(default)]
    pub thermal: Thermal,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    pub output: Output,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub d: f64,
    #[serde(rename = "R_S")]
    pub r_s: f64,
    #[serde(rename = "x_S", default)]
    pub x_s: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grating {
    #[serde(rename = "D")]
    pub period: f64,
    pub h: f64,
    pub f: f64,
    pub material: String,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sphere {
    pub material: String,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thermal {
    #[serde(rename = "T")]
    pub temperature: f64,
}

impl Default for Thermal {
    fn default() -> Self {
        Thermal { temperature: 300.0 }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub deterministic: bool,
    #[serde(default)]
    pub auto_truncate: bool,
    #[serde(default)]
    pub truncation: TruncationOverrides,
}

fn default_tol() -> f64 {
    1e-3
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics { tol: default_tol(), deterministic: false, auto_truncate: false, truncation: TruncationOverrides::default() }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationOverrides {
    pub lmax: Option<usize>,
    pub n_orders: Option<usize>,
    pub n_kx: Option<usize>,
    pub n_ky: Option<usize>,
    pub ky_cutoff: Option<f64>,
}

impl TruncationOverrides {
    pub fn is_empty(&self) -> bool {
        self.lmax.is_none() && self.n_orders.is_none() && self.n_kx.is_none() && self.n_ky.is_none() && self.ky_cutoff.is_none()
    }

    pub fn apply(&self, mut t: TruncationSpec) -> TruncationSpec {
        if let Some(v) = self.lmax {
            t.lmax = v;
        }
        if let Some(v) = self.n_orders {
            t.n_orders = v;
        }
        if let Some(v) = self.n_kx {
            t.n_kx = v;
        }
        if let Some(v) = self.n_ky {
            t.n_ky = v;
        }
        if let Some(v) = self.ky_cutoff {
            t.ky_cutoff = v;
        }
        t
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Deserialize)]
pub enum SweepVariable {
    #[serde(rename = "d")]
    Distance,
    #[serde(rename = "x_S")]
    Position,
    #[serde(rename = "f")]
    Filling,
    #[serde(rename = "h")]
    Depth,
    #[serde(rename = "R_S")]
    Radius,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::Distance => "d",
            SweepVariable::Position => "x_S",
            SweepVariable::Filling => "f",
            SweepVariable::Depth => "h",
            SweepVariable::Radius => "R_S",
        }
    }
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepVariable {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "d" => Ok(SweepVariable::Distance),
            "x_S" => Ok(SweepVariable::Position),
            "f" => Ok(SweepVariable::Filling),
            "h" => Ok(SweepVariable::Depth),
            "R_S" => Ok(SweepVariable::Radius),
            _ => Err(CliError::field("sweep.variable", format!("unknown sweep variable `{s}` (expected d, x_S, f, h or R_S)"))),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

impl FromStr for Sweep {
    type Err = CliError;

    /// Parses `var=v1,v2,...`.
    fn from_str(s: &str) -> Result<Self, CliError> {
        let (var, list) = s
            .split_once('=')
            .ok_or_else(|| CliError::field("--sweep-override", format!("expected var=v1,v2,..., got `{s}`")))?;
        let variable = var.trim().parse()?;
        let values = list
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::field("--sweep-override", format!("`{v}` is not a number")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Sweep { variable, values })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    pub path: PathBuf,
    #[serde(default)]
    pub format: Format,
    #[serde(default)]
    pub ledger: bool,
    #[serde(default)]
    pub force: bool,
    #[serde(default)]
    pub eta_double: bool,
}

/// One fully specified sweep point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub d: f64,
    pub r_s: f64,
    pub x_s: f64,
    pub period: f64,
    pub h: f64,
    pub f: f64,
    pub temperature: f64,
}

impl Point {
    fn check(&self, prefix: &str) -> Result<(), CliError> {
        let name = |f: &str| if prefix.is_empty() { f.to_string() } else { format!("{prefix} ({f})") };
        let positive = [("geometry.d", self.d), ("geometry.R_S", self.r_s), ("grating.D", self.period), ("thermal.T", self.temperature)];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(CliError::field(&name(field), format!("must be positive, got {v}")));
            }
        }
        if !(self.h.is_finite() && self.h >= 0.0) {
            return Err(CliError::field(&name("grating.h"), format!("must be non-negative, got {}", self.h)));
        }
        if !(self.f > 0.0 && self.f <= 1.0) {
            return Err(CliError::field(&name("grating.f"), format!("must lie in (0, 1], got {}", self.f)));
        }
        if !self.x_s.is_finite() {
            return Err(CliError::field(&name("geometry.x_S"), format!("must be finite, got {}", self.x_s)));
        }
        Ok(())
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        // relative paths resolve against the config file
        if let Some(dir) = path.parent() {
            if cfg.output.path.is_relative() {
                cfg.output.path = dir.join(&cfg.output.path);
            }
            if let Some(c) = cfg.cache_dir.as_mut().filter(|c| c.is_relative()) {
                *c = dir.join(&*c);
            }
        }
        Ok(cfg)
    }

    fn base_point(&self) -> Point {
        Point {
            d: self.geometry.d,
            r_s: self.geometry.r_s,
            x_s: self.geometry.x_s.unwrap_or(0.5 * self.grating.f * self.grating.period),
            period: self.grating.period,
            h: self.grating.h,
            f: self.grating.f,
            temperature: self.thermal.temperature,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.base_point().check("")?;
        let tol = self.numerics.tol;
        if !(tol > 1e-6 && tol < 1e-1) {
            return Err(CliError::field("numerics.tol", format!("must lie in (1e-6, 1e-1), got {tol}")));
        }
        let t = self.numerics.truncation.apply(TruncationSpec { lmax: 1, n_orders: 0, n_kx: 2, n_ky: 2, ky_cutoff: 10.0 });
        t.validate().map_err(|e| CliError::field("numerics.truncation", e.to_string()))?;
        if self.numerics.auto_truncate && !self.numerics.truncation.is_empty() {
            return Err(CliError::field("numerics.auto_truncate", "cannot be combined with truncation overrides".into()));
        }
        resolve_material(&self.sphere.material).map_err(|e| CliError::field("sphere.material", e))?;
        resolve_material(&self.grating.material).map_err(|e| CliError::field("grating.material", e))?;
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(CliError::field("sweep.values", "must not be empty".into()));
            }
            for (i, p) in self.points().iter().enumerate() {
                p.check(&format!("sweep.values[{i}]"))?;
            }
        }
        Ok(())
    }

    /// Sweep points in input order; a single point without a sweep.
    pub fn points(&self) -> Vec<Point> {
        let base = self.base_point();
        let Some(sweep) = &self.sweep else {
            return vec![base];
        };
        sweep
            .values
            .iter()
            .map(|&v| {
                let mut p = base;
                match sweep.variable {
                    SweepVariable::Distance => p.d = v,
                    SweepVariable::Position => p.x_s = v,
                    SweepVariable::Filling => p.f = v,
                    SweepVariable::Depth => p.h = v,
                    SweepVariable::Radius => p.r_s = v,
                }
                if sweep.variable == SweepVariable::Filling && self.geometry.x_s.is_none() {
                    p.x_s = 0.5 * p.f * p.period;
                }
                p
            })
            .collect()
    }
}

pub fn resolve_material(name: &str) -> Result<MaterialModel, String> {
    let (kind, arg) = match name.split_once(':') {
        Some((k, a)) => (k.trim(), Some(a.trim())),
        None => (name.trim(), None),
    };
    let number = |s: &str| s.trim().parse::<f64>().map_err(|_| format!("`{s}` is not a number in material `{name}`"));
    match (kind, arg) {
        ("gold", None) => Ok(MaterialModel::gold()),
        ("silica", None) => Ok(MaterialModel::silica()),
        ("vacuum", None) => Ok(MaterialModel::Vacuum),
        ("constant", Some(a)) => {
            let eps = number(a)?;
            if eps < 1.0 {
                return Err(format!("constant permittivity must be at least 1, got {eps}"));
            }
            Ok(MaterialModel::Constant(eps))
        }
        ("drude", Some(a)) => {
            let (wp, g) = a.split_once(',').ok_or_else(|| format!("expected drude:<omega_p eV>,<gamma eV>, got `{name}`"))?;
            Ok(MaterialModel::Drude { omega_p: ev_to_rad_per_s(number(wp)?), gamma: ev_to_rad_per_s(number(g)?) })
        }
        ("file", Some(a)) => MaterialModel::from_file(Path::new(a)).map_err(|e| e.to_string()),
        _ => Err(format!("unknown material `{name}`")),
    }
}
