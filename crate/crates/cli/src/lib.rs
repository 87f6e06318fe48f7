//! Batch driver for sphere-grating Casimir sweeps: configuration, caching and
//! result files.

pub mod cache;
pub mod config;
pub mod plot;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sgcasimir::energy::{
    eta, free_energy_with, lateral_force_with, pfa_double, pfa_single, EnergySettings, MatsubaraTerm, ThermalState,
};
use sgcasimir::materials::MaterialModel;
use sgcasimir::mie::SphereSpec;
use sgcasimir::rcwa::GratingSpec;
use sgcasimir::roundtrip::{auto_truncate, TruncationSpec};

use crate::cache::{Cache, KeyBuilder, PointRecord};
use crate::config::{resolve_material, Format, Point, RunConfig, Sweep, SweepVariable};
pub use crate::plot::{emit_plot_data, PlotKind};

/// Environment variable naming the cache directory when neither the command
/// line nor the config sets one.
pub const CACHE_DIR_ENV: &str = "SGCASIMIR_CACHE_DIR";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid configuration: {field}: {message}")]
    Field { field: String, message: String },
    #[error("unknown plot kind `{0}` (expected energy_vs_d, energy_vs_xS, eta_vs_d or force_vs_xS)")]
    UnknownPlot(String),
    #[error("plot {kind} needs column {column}, which is missing from some rows")]
    MissingColumn { kind: &'static str, column: &'static str },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn field(field: &str, message: String) -> Self {
        CliError::Field { field: field.to_string(), message }
    }

    /// 2 for invalid input, 1 for anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Field { .. } | CliError::UnknownPlot(_) => 2,
            _ => 1,
        }
    }
}

/// Exit status when at least one sweep point failed numerically.
pub const EXIT_POINT_FAILURE: i32 = 3;

#[allow(non_snake_case)]
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub d_m: f64,
    pub R_S_m: f64,
    pub x_S_m: f64,
    pub D_m: f64,
    pub h_m: f64,
    pub f: f64,
    pub T_K: f64,
    pub sphere_material: String,
    pub grating_material: String,
    pub F_J: f64,
    pub F_over_kBT: f64,
    pub F_x_N: Option<f64>,
    pub eta_single: f64,
    pub eta_double: Option<f64>,
    pub lmax: usize,
    pub N: usize,
    pub n_terms: usize,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointError {
    pub index: usize,
    pub variable: Option<String>,
    pub value: Option<f64>,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct RunReport {
    pub rows: Vec<ResultRow>,
    pub errors: Vec<PointError>,
    pub cache_hits: usize,
    pub files: Vec<PathBuf>,
}

/// Command-line adjustments applied on top of a loaded config.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub sweep: Option<String>,
    pub tol: Option<f64>,
    pub deterministic: bool,
    pub cache_dir: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, mut cfg: RunConfig) -> Result<RunConfig, CliError> {
        if let Some(s) = &self.sweep {
            cfg.sweep = Some(s.parse::<Sweep>()?);
        }
        if let Some(t) = self.tol {
            cfg.numerics.tol = t;
        }
        cfg.numerics.deterministic |= self.deterministic;
        if let Some(c) = &self.cache_dir {
            cfg.cache_dir = Some(c.clone());
        }
        if cfg.cache_dir.is_none() {
            cfg.cache_dir = std::env::var_os(CACHE_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

struct Materials {
    sphere: MaterialModel,
    grating: MaterialModel,
}

fn cache_key(cfg: &RunConfig, m: &Materials, p: &Point) -> cache::Key {
    let t = &cfg.numerics.truncation;
    let opt_u = |v: Option<usize>| v.map_or(u64::MAX, |v| v as u64);
    KeyBuilder::new()
        .bytes(&m.sphere.fingerprint())
        .bytes(&m.grating.fingerprint())
        .f64(p.d)
        .f64(p.r_s)
        .f64(p.x_s)
        .f64(p.period)
        .f64(p.h)
        .f64(p.f)
        .f64(p.temperature)
        .f64(cfg.numerics.tol)
        .u64(cfg.numerics.auto_truncate as u64)
        .u64(opt_u(t.lmax))
        .u64(opt_u(t.n_orders))
        .u64(opt_u(t.n_kx))
        .u64(opt_u(t.n_ky))
        .f64(t.ky_cutoff.unwrap_or(f64::NAN))
        .u64(cfg.output.force as u64)
        .u64(cfg.output.eta_double as u64)
        .finish()
}

/// Computes points that share everything but `x_S` in one batched call.
fn compute_batch(cfg: &RunConfig, m: &Materials, points: &[Point]) -> Result<Vec<PointRecord>, String> {
    let t0 = Instant::now();
    let p = points[0];
    let run = || -> sgcasimir::Result<Vec<PointRecord>> {
        let sphere = SphereSpec::new(p.r_s, m.sphere.clone())?;
        let grating = GratingSpec::new(p.period, p.h, p.f, m.grating.clone())?;
        let thermal = ThermalState::new(p.temperature)?;
        let tol = cfg.numerics.tol;
        let trunc = if cfg.numerics.auto_truncate {
            auto_truncate(&sphere, &grating, p.d, tol)?
        } else {
            cfg.numerics.truncation.apply(TruncationSpec::seed(&sphere, &grating, p.d))
        };
        let settings = EnergySettings::with_trunc(tol, trunc);
        let xs: Vec<f64> = points.iter().map(|q| q.x_s).collect();
        let energies = free_energy_with(&sphere, &grating, p.d, &xs, &thermal, &settings)?;
        let forces = if cfg.output.force {
            Some(lateral_force_with(&sphere, &grating, p.d, &xs, &thermal, &settings)?)
        } else {
            None
        };
        let single = pfa_single(&sphere, &grating, p.d, &thermal, tol)?;
        let double = if cfg.output.eta_double { Some(pfa_double(&sphere, &grating, p.d, &thermal, tol)?) } else { None };
        let wall_time = t0.elapsed().as_secs_f64() / points.len() as f64;
        Ok(energies
            .into_iter()
            .enumerate()
            .map(|(i, e)| PointRecord {
                free_energy: e.free_energy,
                kbt: e.kbt,
                force: forces.as_ref().map(|f| f[i]),
                eta_single: eta(e.free_energy, single),
                eta_double: double.map(|d| eta(e.free_energy, d)),
                lmax: trunc.lmax,
                n_orders: trunc.n_orders,
                wall_time,
                terms: e.terms,
            })
            .collect())
    };
    run().map_err(|e| e.to_string())
}

fn make_row(cfg: &RunConfig, p: &Point, r: &PointRecord) -> ResultRow {
    ResultRow {
        d_m: p.d,
        R_S_m: p.r_s,
        x_S_m: p.x_s,
        D_m: p.period,
        h_m: p.h,
        f: p.f,
        T_K: p.temperature,
        sphere_material: cfg.sphere.material.clone(),
        grating_material: cfg.grating.material.clone(),
        F_J: r.free_energy,
        F_over_kBT: r.free_energy / r.kbt,
        F_x_N: r.force,
        eta_single: r.eta_single,
        eta_double: r.eta_double,
        lmax: r.lmax,
        N: r.n_orders,
        n_terms: r.terms.len(),
        wall_time_s: if cfg.numerics.deterministic { 0.0 } else { r.wall_time },
    }
}

/// Computed records per point in input order, with cache hits counted.
fn compute_all(cfg: &RunConfig, cache: Option<&Cache>) -> Result<(Vec<Result<PointRecord, String>>, usize), CliError> {
    let m = Materials {
        sphere: resolve_material(&cfg.sphere.material).map_err(|e| CliError::field("sphere.material", e))?,
        grating: resolve_material(&cfg.grating.material).map_err(|e| CliError::field("grating.material", e))?,
    };
    let points = cfg.points();
    let keys: Vec<_> = points.iter().map(|p| cache_key(cfg, &m, p)).collect();
    let mut out: Vec<Option<Result<PointRecord, String>>> = keys.iter().map(|k| cache.and_then(|c| c.get(k)).map(Ok)).collect();
    let hits = out.iter().filter(|r| r.is_some()).count();
    let todo: Vec<usize> = (0..points.len()).filter(|&i| out[i].is_none()).collect();
    let batches: Vec<Vec<usize>> = match cfg.sweep.as_ref().map(|s| s.variable) {
        Some(SweepVariable::Position) if !todo.is_empty() => vec![todo],
        _ => todo.into_iter().map(|i| vec![i]).collect(),
    };
    let results: Vec<(Vec<usize>, Result<Vec<PointRecord>, String>)> = batches
        .into_par_iter()
        .map(|b| {
            let pts: Vec<Point> = b.iter().map(|&i| points[i]).collect();
            let r = compute_batch(cfg, &m, &pts);
            (b, r)
        })
        .collect();
    for (batch, r) in results {
        match r {
            Ok(records) => {
                for (i, rec) in batch.into_iter().zip(records) {
                    if let Some(c) = cache {
                        if let Err(e) = c.put(&keys[i], &rec) {
                            log::warn!("cache write failed: {e}");
                        }
                    }
                    out[i] = Some(Ok(rec));
                }
            }
            Err(e) => {
                for i in batch {
                    log::error!("point {i} failed: {e}");
                    out[i] = Some(Err(e.clone()));
                }
            }
        }
    }
    Ok((out.into_iter().map(|r| r.expect("every point resolved")).collect(), hits))
}

/// Runs every sweep point and writes the result file, error records, the
/// optional per-point Matsubara ledgers and the requested plot data.
///
/// Failed points are reported in [`RunReport::errors`]; the rows of the
/// successful ones are written regardless.
pub fn run(cfg: &RunConfig, plots: &[PlotKind]) -> Result<RunReport, CliError> {
    let cache = cfg.cache_dir.as_deref().map(Cache::open).transpose()?;
    let (records, cache_hits) = compute_all(cfg, cache.as_ref())?;
    let points = cfg.points();
    let mut report = RunReport { cache_hits, ..Default::default() };
    let sweep = cfg.sweep.as_ref();
    for (i, (p, r)) in points.iter().zip(&records).enumerate() {
        match r {
            Ok(rec) => report.rows.push(make_row(cfg, p, rec)),
            Err(message) => report.errors.push(PointError {
                index: i,
                variable: sweep.map(|s| s.variable.name().to_string()),
                value: sweep.map(|s| s.values[i]),
                message: message.clone(),
            }),
        }
    }
    let path = &cfg.output.path;
    write_rows(path, cfg.output.format, &report.rows)?;
    report.files.push(path.clone());
    let errors_path = sibling(path, "errors", "json");
    if report.errors.is_empty() {
        if errors_path.exists() {
            std::fs::remove_file(&errors_path)?;
        }
    } else {
        write_atomic(&errors_path, |w| Ok(serde_json::to_writer_pretty(w, &report.errors)?))?;
        report.files.push(errors_path);
    }
    if cfg.output.ledger {
        let dir = sibling(path, "ledger", "");
        std::fs::create_dir_all(&dir)?;
        for (i, r) in records.iter().enumerate() {
            if let Ok(rec) = r {
                let file = dir.join(format!("point_{i:04}.csv"));
                write_atomic(&file, |w| Ok(write_ledger(w, &rec.terms)?))?;
                report.files.push(file);
            }
        }
    }
    for &kind in plots {
        report.files.extend(emit_plot_data(&report.rows, kind, &sibling(path, kind.name(), ""))?);
    }
    Ok(report)
}

fn write_ledger<W: Write>(mut w: W, terms: &[MatsubaraTerm]) -> std::io::Result<()> {
    writeln!(w, "n,xi_rad_per_s,term_J,cumulative_J")?;
    let mut acc = 0.0;
    for t in terms {
        acc += t.value;
        writeln!(w, "{},{:e},{:e},{:e}", t.n, t.xi, t.value, acc)?;
    }
    Ok(())
}

/// `<dir>/<stem>_<tag>[.ext]` next to `path`.
pub fn sibling(path: &Path, tag: &str, ext: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "results".into());
    let name = if ext.is_empty() { format!("{stem}_{tag}") } else { format!("{stem}_{tag}.{ext}") };
    path.with_file_name(name)
}

/// Writes to a temporary file in the target directory, then renames it over
/// `path`.
pub fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> Result<(), CliError>) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    {
        let mut w = std::io::BufWriter::new(tmp.as_file_mut());
        body(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}

pub fn write_rows(path: &Path, format: Format, rows: &[ResultRow]) -> Result<(), CliError> {
    write_atomic(path, |w| {
        match format {
            Format::Csv => {
                let mut c = csv::WriterBuilder::new().has_headers(false).from_writer(w);
                c.write_record(ROW_COLUMNS)?;
                for r in rows {
                    c.serialize(r)?;
                }
                c.flush()?;
            }
            Format::Json => {
                serde_json::to_writer_pretty(&mut *w, rows)?;
                writeln!(w)?;
            }
        }
        Ok(())
    })
}

/// CSV header, in [`ResultRow`] field order.
pub const ROW_COLUMNS: [&str; 18] = [
    "d_m",
    "R_S_m",
    "x_S_m",
    "D_m",
    "h_m",
    "f",
    "T_K",
    "sphere_material",
    "grating_material",
    "F_J",
    "F_over_kBT",
    "F_x_N",
    "eta_single",
    "eta_double",
    "lmax",
    "N",
    "n_terms",
    "wall_time_s",
];

pub fn read_rows(path: &Path, format: Format) -> Result<Vec<ResultRow>, CliError> {
    match format {
        Format::Csv => {
            let mut r = csv::Reader::from_path(path)?;
            Ok(r.deserialize().collect::<Result<_, _>>()?)
        }
        Format::Json => Ok(serde_json::from_reader(std::fs::File::open(path)?)?),
    }
}
