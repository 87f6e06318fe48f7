//! On-disk cache of finished sweep points.
//!
//! Each entry is a versioned binary blob named by the SHA-256 key of
//! everything that determines the point: materials, geometry, temperature,
//! tolerance, truncation and requested observables.

use std::io::Write;
use std::path::{Path, PathBuf};

use sgcasimir::energy::MatsubaraTerm;
use sha2::{Digest, Sha256};

use crate::CliError;

const MAGIC: &[u8; 6] = b"SGCPT\0";
const VERSION: u16 = 1;

pub type Key = [u8; 32];

/// Computed part of a sweep point.
#[derive(Clone, Debug, PartialEq)]
pub struct PointRecord {
    pub free_energy: f64,
    pub kbt: f64,
    pub force: Option<f64>,
    pub eta_single: f64,
    pub eta_double: Option<f64>,
    pub lmax: usize,
    pub n_orders: usize,
    pub wall_time: f64,
    pub terms: Vec<MatsubaraTerm>,
}

#[derive(Default)]
pub struct KeyBuilder(Sha256);

impl KeyBuilder {
    pub fn new() -> Self {
        let mut h = Sha256::new();
        h.update(MAGIC);
        h.update(VERSION.to_le_bytes());
        KeyBuilder(h)
    }

    pub fn bytes(mut self, b: &[u8]) -> Self {
        self.0.update((b.len() as u64).to_le_bytes());
        self.0.update(b);
        self
    }

    pub fn f64(mut self, v: f64) -> Self {
        self.0.update(v.to_bits().to_le_bytes());
        self
    }

    pub fn u64(mut self, v: u64) -> Self {
        self.0.update(v.to_le_bytes());
        self
    }

    pub fn finish(self) -> Key {
        self.0.finalize().into()
    }
}

pub struct Cache {
    dir: PathBuf,
}

impl Cache {
    pub fn open(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)?;
        Ok(Cache { dir: dir.to_path_buf() })
    }

    fn path(&self, key: &Key) -> PathBuf {
        let hex: String = key.iter().map(|b| format!("{b:02x}")).collect();
        self.dir.join(format!("{hex}.bin"))
    }

    /// Missing, stale or damaged entries read as `None`.
    pub fn get(&self, key: &Key) -> Option<PointRecord> {
        let path = self.path(key);
        let bytes = std::fs::read(&path).ok()?;
        match decode(&bytes, key) {
            Some(r) => Some(r),
            None => {
                log::warn!("ignoring unreadable cache entry {}", path.display());
                None
            }
        }
    }

    /// Writes through a temporary file so concurrent readers never see a
    /// partial entry.
    pub fn put(&self, key: &Key, record: &PointRecord) -> Result<(), CliError> {
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(&encode(key, record))?;
        tmp.persist(self.path(key)).map_err(|e| CliError::Io(e.error))?;
        Ok(())
    }
}

fn encode(key: &Key, r: &PointRecord) -> Vec<u8> {
    let mut out = Vec::with_capacity(128 + 24 * r.terms.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(key);
    let opt = |out: &mut Vec<u8>, v: Option<f64>| {
        out.push(v.is_some() as u8);
        out.extend_from_slice(&v.unwrap_or(0.0).to_le_bytes());
    };
    for v in [r.free_energy, r.kbt] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    opt(&mut out, r.force);
    out.extend_from_slice(&r.eta_single.to_le_bytes());
    opt(&mut out, r.eta_double);
    for v in [r.lmax as u64, r.n_orders as u64] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&r.wall_time.to_le_bytes());
    out.extend_from_slice(&(r.terms.len() as u64).to_le_bytes());
    for t in &r.terms {
        out.extend_from_slice(&(t.n as u64).to_le_bytes());
        out.extend_from_slice(&t.xi.to_le_bytes());
        out.extend_from_slice(&t.value.to_le_bytes());
    }
    out
}

struct Reader<'a>(&'a [u8]);

impl Reader<'_> {
    fn bytes(&mut self, n: usize) -> Option<&[u8]> {
        let (head, tail) = self.0.split_at_checked(n)?;
        self.0 = tail;
        Some(head)
    }

    fn u8(&mut self) -> Option<u8> {
        self.bytes(1).map(|b| b[0])
    }

    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.bytes(8)?.try_into().ok()?))
    }

    fn f64(&mut self) -> Option<f64> {
        self.u64().map(f64::from_bits)
    }

    fn opt(&mut self) -> Option<Option<f64>> {
        let flag = self.u8()?;
        let v = self.f64()?;
        match flag {
            0 => Some(None),
            1 => Some(Some(v)),
            _ => None,
        }
    }
}

fn decode(bytes: &[u8], key: &Key) -> Option<PointRecord> {
    let mut r = Reader(bytes);
    if r.bytes(6)? != MAGIC || r.bytes(2)? != VERSION.to_le_bytes() || r.bytes(32)? != key {
        return None;
    }
    let free_energy = r.f64()?;
    let kbt = r.f64()?;
    let force = r.opt()?;
    let eta_single = r.f64()?;
    let eta_double = r.opt()?;
    let lmax = r.u64()? as usize;
    let n_orders = r.u64()? as usize;
    let wall_time = r.f64()?;
    let count = r.u64()? as usize;
    if r.0.len() != 24 * count {
        return None;
    }
    let mut terms = Vec::with_capacity(count);
    for _ in 0..count {
        let n = r.u64()? as usize;
        let xi = r.f64()?;
        let value = r.f64()?;
        terms.push(MatsubaraTerm { n, xi, value });
    }
    Some(PointRecord { free_energy, kbt, force, eta_single, eta_double, lmax, n_orders, wall_time, terms })
}
