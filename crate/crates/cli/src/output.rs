//! CSV tables and the run manifest.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use vifem::{NodalVector, RunResult};

use crate::config::RunConfig;

/// A table with a fixed header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

/// 17 significant digits, enough to reproduce every `f64`.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// One row per mesh with the rates between consecutive meshes. Rates are
/// blank on the coarsest mesh and on failed levels.
pub fn convergence_table(result: &RunResult) -> Table {
    let header = vec!["h", "dofs", "l2_rel", "h1_rel", "eoc_l2", "eoc_h1", "pdas_max_iter"];
    let mut rows = Vec::new();
    let mut rate = 0;
    let mut seen_ok = false;
    for l in &result.levels {
        let ok = l.error.is_none();
        let (e2, e1) = if ok && seen_ok {
            let r = (result.eoc_l2.get(rate).copied(), result.eoc_h1.get(rate).copied());
            rate += 1;
            r
        } else {
            (None, None)
        };
        seen_ok |= ok;
        rows.push(vec![
            num(l.h),
            l.dofs.to_string(),
            opt(l.l2_rel),
            opt(l.h1_rel),
            opt(e2),
            opt(e1),
            l.pdas_max_iter.to_string(),
        ]);
    }
    Table { header, rows }
}

pub fn steps_table(result: &RunResult) -> Table {
    let header = vec!["t", "mass", "min_u", "max_u", "energy", "pdas_iters"];
    let rows = result
        .steps
        .iter()
        .map(|s| vec![num(s.t), num(s.mass), num(s.min_u), num(s.max_u), num(s.energy), s.pdas_iters.to_string()])
        .collect();
    Table { header, rows }
}

pub fn stationary_table(result: &RunResult) -> Table {
    let header = vec!["h", "dofs", "l2_rel", "h1_rel", "mass", "min_u", "max_u", "pdas_max_iter"];
    let rows = result
        .levels
        .iter()
        .map(|l| {
            vec![
                num(l.h),
                l.dofs.to_string(),
                opt(l.l2_rel),
                opt(l.h1_rel),
                num(l.mass),
                num(l.min_u),
                num(l.max_u),
                l.pdas_max_iter.to_string(),
            ]
        })
        .collect();
    Table { header, rows }
}

/// Nodal values with their coordinates.
pub fn solution_table(u: &NodalVector) -> Table {
    let space = u.space();
    let header = if space.dim() == 1 { vec!["x", "u"] } else { vec!["x", "y", "u"] };
    let rows = (0..u.len())
        .map(|i| {
            let mut row: Vec<String> = space.coord(i).iter().map(|&c| num(c)).collect();
            row.push(num(u.values()[i]));
            row
        })
        .collect();
    Table { header, rows }
}

/// Writes `table` to `path`, preceded by a `# created ...` line when a
/// timestamp is given.
pub fn write_csv(path: &Path, table: &Table, timestamp: Option<&str>) -> std::io::Result<()> {
    let mut file = fs::File::create(path)?;
    if let Some(ts) = timestamp {
        writeln!(file, "# created {ts}")?;
    }
    let mut w = csv::Writer::from_writer(file);
    w.write_record(&table.header)?;
    for r in &table.rows {
        w.write_record(r)?;
    }
    w.flush()
}

#[derive(Serialize)]
struct Versions {
    vifem: &'static str,
    vifem_cli: &'static str,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config: &'a RunConfig,
    versions: Versions,
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    created: Option<&'a str>,
    files: &'a [String],
    result: &'a RunResult,
}

pub fn write_manifest(
    dir: &Path,
    command: &str,
    config: &RunConfig,
    result: &RunResult,
    files: &[String],
    timestamp: Option<&str>,
) -> std::io::Result<()> {
    let m = Manifest {
        command,
        config,
        versions: Versions { vifem: vifem::VERSION, vifem_cli: env!("CARGO_PKG_VERSION") },
        seed: config.effective_seed(),
        created: timestamp,
        files,
        result,
    };
    let text = serde_json::to_string_pretty(&m).map_err(std::io::Error::other)?;
    fs::write(dir.join("manifest.json"), text + "\n")
}
