//! Plot-ready CSV extracts plus matplotlib script stubs.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::{write_atomic, CliError, ResultRow};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum PlotKind {
    #[value(name = "energy_vs_d")]
    EnergyVsD,
    #[value(name = "energy_vs_xS")]
    EnergyVsXs,
    #[value(name = "eta_vs_d")]
    EtaVsD,
    #[value(name = "force_vs_xS")]
    ForceVsXs,
}

impl PlotKind {
    pub const ALL: [PlotKind; 4] = [PlotKind::EnergyVsD, PlotKind::EnergyVsXs, PlotKind::EtaVsD, PlotKind::ForceVsXs];

    pub fn name(self) -> &'static str {
        match self {
            PlotKind::EnergyVsD => "energy_vs_d",
            PlotKind::EnergyVsXs => "energy_vs_xS",
            PlotKind::EtaVsD => "eta_vs_d",
            PlotKind::ForceVsXs => "force_vs_xS",
        }
    }
}

impl fmt::Display for PlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlotKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        PlotKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| CliError::UnknownPlot(s.to_string()))
    }
}

/// Writes `<stem>.csv` and `<stem>.py`; returns both paths.
pub fn emit_plot_data(rows: &[ResultRow], kind: PlotKind, stem: &Path) -> Result<Vec<PathBuf>, CliError> {
    let csv_path = stem.with_extension("csv");
    let py_path = stem.with_extension("py");
    let mut rows: Vec<&ResultRow> = rows.iter().collect();
    let (header, script): (&[&str], String) = match kind {
        PlotKind::EnergyVsD => {
            rows.sort_by(|a, b| a.d_m.total_cmp(&b.d_m));
            (&["d_m", "F_over_kBT"], xy_script("d (m)", "F / k_B T"))
        }
        PlotKind::EnergyVsXs => {
            rows.sort_by(|a, b| a.x_S_m.total_cmp(&b.x_S_m));
            (&["x_S_m", "F_over_kBT"], xy_script("x_S (m)", "F / k_B T"))
        }
        PlotKind::ForceVsXs => {
            if rows.iter().any(|r| r.F_x_N.is_none()) {
                return Err(CliError::MissingColumn { kind: "force_vs_xS", column: "F_x_N" });
            }
            rows.sort_by(|a, b| a.x_S_m.total_cmp(&b.x_S_m));
            (&["x_S_m", "F_x_N"], xy_script("x_S (m)", "F_x (N)"))
        }
        PlotKind::EtaVsD => {
            rows.sort_by(|a, b| a.f.total_cmp(&b.f).then(a.d_m.total_cmp(&b.d_m)));
            (&["f", "d_m", "R_S_m", "d_over_R", "eta_single", "eta_double"], ETA_SCRIPT.to_string())
        }
    };
    write_atomic(&csv_path, |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(header)?;
        for r in &rows {
            let fields: Vec<String> = match kind {
                PlotKind::EnergyVsD => vec![num(r.d_m), num(r.F_over_kBT)],
                PlotKind::EnergyVsXs => vec![num(r.x_S_m), num(r.F_over_kBT)],
                PlotKind::ForceVsXs => vec![num(r.x_S_m), r.F_x_N.map(num).unwrap_or_default()],
                PlotKind::EtaVsD => vec![
                    num(r.f),
                    num(r.d_m),
                    num(r.R_S_m),
                    num(r.d_m / r.R_S_m),
                    num(r.eta_single),
                    r.eta_double.map(num).unwrap_or_default(),
                ],
            };
            c.write_record(&fields)?;
        }
        c.flush()?;
        Ok(())
    })?;
    let data_name = csv_path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    write_atomic(&py_path, |w| Ok(w.write_all(script.replace("@DATA@", &data_name).as_bytes())?))?;
    Ok(vec![csv_path, py_path])
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn xy_script(xlabel: &str, ylabel: &str) -> String {
    format!(
        r#"import csv
import matplotlib.pyplot as plt

with open("@DATA@") as fh:
    rows = list(csv.reader(fh))[1:]
x = [float(r[0]) for r in rows]
y = [float(r[1]) for r in rows]
plt.plot(x, y, "o-")
plt.xlabel("{xlabel}")
plt.ylabel("{ylabel}")
plt.show()
"#
    )
}

const ETA_SCRIPT: &str = r#"import csv
from collections import defaultdict
import matplotlib.pyplot as plt

groups = defaultdict(list)
with open("@DATA@") as fh:
    for r in csv.DictReader(fh):
        groups[r["f"]].append((float(r["d_m"]), float(r["eta_single"])))
for f, pts in sorted(groups.items()):
    d, eta = zip(*pts)
    plt.plot([v * 1e6 for v in d], eta, "o-", label=f"f = {float(f):g}")
plt.xlabel("d (um)")
plt.ylabel("eta")
plt.legend()
plt.show()
"#;
