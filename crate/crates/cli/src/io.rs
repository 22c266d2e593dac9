//! Field CSV export/import and the line-oriented report format.
//!
//! Fields are written as `x1[,x2],value` rows, one per interior node in
//! lexicographic node order, with every float printed to 17 significant
//! digits so that export followed by import is bit-exact. Reports are
//! `key: value` lines in a fixed key order; branch reports carry one block
//! per beta separated by `---`.

use std::fs;
use std::io::Write;
use std::path::Path;

use gpsep::grid::{Field, Grid};
use gpsep::solver::BranchDiagnostics;

use crate::CliError;

/// 17-significant-digit float formatting; round-trips f64 exactly.
pub fn fmt_float(x: f64) -> String {
    format!("{:.16e}", x)
}

pub fn export_field(grid: &Grid, f: &Field, path: &Path) -> Result<(), CliError> {
    if f.len() != grid.num_nodes() {
        return Err(CliError::Core(gpsep::Error::Dimension {
            expected: grid.num_nodes(),
            got: f.len(),
        }));
    }
    let mut out = String::new();
    out.push_str(match grid.dim() {
        1 => "x1,value\n",
        _ => "x1,x2,value\n",
    });
    for i in 0..grid.num_nodes() {
        let x = grid.node_coords(i);
        for a in 0..grid.dim() {
            out.push_str(&fmt_float(x[a]));
            out.push(',');
        }
        out.push_str(&fmt_float(f[i]));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| CliError::Io(path.display().to_string(), e))
}

pub fn import_field(grid: &Grid, path: &Path) -> Result<Field, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Io(path.display().to_string(), e))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    let expected_header = match grid.dim() {
        1 => "x1,value",
        _ => "x1,x2,value",
    };
    if header != expected_header {
        return Err(CliError::Config(format!(
            "{}: header {header:?} does not match the grid (expected {expected_header:?})",
            path.display()
        )));
    }
    let mut values = Vec::with_capacity(grid.num_nodes());
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let value = line.rsplit(',').next().unwrap_or("");
        let v: f64 = value.parse().map_err(|_| {
            CliError::Config(format!(
                "{}: row {} has a malformed value {value:?}",
                path.display(),
                i + 1
            ))
        })?;
        values.push(v);
    }
    if values.len() != grid.num_nodes() {
        return Err(CliError::Config(format!(
            "{}: {} rows for a grid with {} nodes",
            path.display(),
            values.len(),
            grid.num_nodes()
        )));
    }
    Ok(values)
}

/// One `key: value` record; values are pre-formatted strings.
pub type Record = (&'static str, String);

pub struct ReportWriter {
    buffer: String,
    blocks: usize,
}

impl ReportWriter {
    pub fn new() -> Self {
        ReportWriter { buffer: String::new(), blocks: 0 }
    }

    /// Append one block of records; blocks after the first are preceded by
    /// a `---` separator line.
    pub fn block(&mut self, records: &[Record]) {
        if self.blocks > 0 {
            self.buffer.push_str("---\n");
        }
        for (key, value) in records {
            self.buffer.push_str(key);
            self.buffer.push_str(": ");
            self.buffer.push_str(value);
            self.buffer.push('\n');
        }
        self.blocks += 1;
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut file =
            fs::File::create(path).map_err(|e| CliError::Io(path.display().to_string(), e))?;
        file.write_all(self.buffer.as_bytes())
            .map_err(|e| CliError::Io(path.display().to_string(), e))
    }
}

/// Records for one diagnostics block, in the documented key order:
/// beta?, energy, residual, morse_index, nullity, segregation, h1_u, h1_v,
/// linf_u, linf_v, nodal_components, nodal_delta.
pub fn diagnostics_records(
    beta: Option<f64>,
    d: &BranchDiagnostics,
    morse: bool,
    nodal: bool,
) -> Vec<Record> {
    let mut rec: Vec<Record> = Vec::new();
    if let Some(beta) = beta {
        rec.push(("beta", fmt_float(beta)));
    }
    rec.push(("energy", fmt_float(d.energy)));
    rec.push(("residual", fmt_float(d.residual)));
    if morse {
        if let (Some(index), Some(nullity)) = (d.morse_index, d.nullity) {
            rec.push(("morse_index", index.to_string()));
            rec.push(("nullity", nullity.to_string()));
        }
    }
    rec.push(("segregation", fmt_float(d.segregation)));
    rec.push(("h1_u", fmt_float(d.h1_u)));
    rec.push(("h1_v", fmt_float(d.h1_v)));
    rec.push(("linf_u", fmt_float(d.linf_u)));
    rec.push(("linf_v", fmt_float(d.linf_v)));
    if nodal {
        rec.push(("nodal_components", d.nodal_components.to_string()));
        rec.push(("nodal_delta", fmt_float(d.nodal_delta)));
    }
    rec
}

#[cfg(test)]
mod tests {
    use super::*;
    use gpsep::grid::{build_grid, Domain};
    use std::f64::consts::PI;

    #[test]
    fn export_import_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        for grid in [
            build_grid(Domain::interval(PI, 17).unwrap()),
            build_grid(Domain::rectangle(PI, 2.0, 5, 6).unwrap()),
        ] {
            let f: Field = (0..grid.num_nodes())
                .map(|i| 1e3 * ((i as f64 * 12.9898).sin() * 43758.5453).fract() - 500.0)
                .collect();
            let path = dir.path().join(format!("f{}.csv", grid.dim()));
            export_field(&grid, &f, &path).unwrap();
            let back = import_field(&grid, &path).unwrap();
            assert_eq!(f.len(), back.len());
            for (a, b) in f.iter().zip(&back) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn zero_field_export_format() {
        let dir = tempfile::tempdir().unwrap();
        let grid = build_grid(Domain::interval(PI, 3).unwrap());
        let path = dir.path().join("zero.csv");
        export_field(&grid, &grid.zero_field(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "x1,value");
        assert!(lines[1].ends_with(",0.0000000000000000e0"), "{}", lines[1]);
    }

    #[test]
    fn import_rejects_wrong_length_and_bad_values() {
        let dir = tempfile::tempdir().unwrap();
        let grid = build_grid(Domain::interval(PI, 4).unwrap());
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "x1,value\n1.0,2.0\n").unwrap();
        assert!(import_field(&grid, &path).is_err());
        std::fs::write(&path, "x1,value\n1,a\n2,b\n3,c\n4,d\n").unwrap();
        assert!(import_field(&grid, &path).is_err());
    }

    #[test]
    fn report_blocks_are_separated() {
        let mut w = ReportWriter::new();
        w.block(&[("energy", fmt_float(1.0))]);
        w.block(&[("energy", fmt_float(2.0))]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.txt");
        w.write(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "energy: 1.0000000000000000e0\n---\nenergy: 2.0000000000000000e0\n"
        );
    }
}
