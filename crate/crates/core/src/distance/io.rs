use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DistanceFunction, Node};
use crate::{Error, Result};

/// One row of the exported table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub r: f64,
    pub phi: f64,
    #[serde(rename = "Phi")]
    pub big_phi: f64,
    pub g: f64,
    pub f: f64,
    pub fp: f64,
    pub fpp: f64,
}

/// Constants stored next to the CSV table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceHeader {
    pub r0: f64,
    pub r1: f64,
    pub eta: f64,
    pub c0: f64,
    pub phi0: f64,
    pub r_max: f64,
    pub grid_step: f64,
    pub quad_tol: f64,
    /// Rows `0..=core_rows-1` cover `[0, R₁]`.
    pub core_rows: usize,
}

pub const TABLE_COLUMNS: &str = "r,phi,Phi,g,f,fp,fpp";

impl DistanceFunction {
    pub fn header(&self) -> DistanceHeader {
        DistanceHeader {
            r0: self.r0,
            r1: self.r1,
            eta: self.eta,
            c0: self.c0,
            phi0: self.phi0,
            r_max: self.r_max,
            grid_step: self.grid_step,
            quad_tol: self.quad_tol,
            core_rows: self.nodes.len(),
        }
    }

    /// Writes the table as CSV. Values use shortest round-trip formatting.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{TABLE_COLUMNS}")?;
        for row in self.table() {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                row.r, row.phi, row.big_phi, row.g, row.f, row.fp, row.fpp
            )?;
        }
        Ok(())
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut csv = Vec::new();
        self.write_csv(&mut csv)?;
        fs::write(dir.join(format!("{stem}.csv")), csv)?;
        fs::write(
            dir.join(format!("{stem}.json")),
            serde_json::to_string_pretty(&self.header())?,
        )?;
        Ok(())
    }

    /// Restores a saved table. The κ profile is not stored, so `f''` between
    /// nodes falls back to the interpolated `φ'`.
    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let header: DistanceHeader = serde_json::from_str(&fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
        let text = fs::read_to_string(dir.join(format!("{stem}.csv")))?;
        let mut lines = text.lines();
        if lines.next() != Some(TABLE_COLUMNS) {
            return Err(Error::InvalidInput(format!("table header must be `{TABLE_COLUMNS}`")));
        }
        let mut nodes = Vec::with_capacity(header.core_rows);
        for (lineno, line) in lines.take(header.core_rows).enumerate() {
            let vals: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidInput(format!("table row {}: {e}", lineno + 1)))?;
            let [r, phi, big_phi, g, f, _fp, fpp] = vals[..] else {
                return Err(Error::InvalidInput(format!("table row {} needs 7 columns", lineno + 1)));
            };
            let dg = -0.5 * header.c0 * big_phi / phi;
            nodes.push(Node {
                r,
                phi,
                dphi: (fpp - phi * dg) / g,
                big_phi,
                big_g: 2.0 * (1.0 - g) / header.c0,
                f,
                fpp,
            });
        }
        if nodes.len() != header.core_rows || nodes.len() < 2 {
            return Err(Error::InvalidInput("table is shorter than its header declares".into()));
        }
        Ok(Self {
            r0: header.r0,
            r1: header.r1,
            eta: header.eta,
            c0: header.c0,
            phi0: header.phi0,
            r_max: header.r_max,
            grid_step: header.grid_step,
            quad_tol: header.quad_tol,
            nodes,
            kappa: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::{build_distance, DistanceOptions, KappaSpec};
    use super::*;

    #[test]
    fn round_trip() {
        let spec = KappaSpec::quartic_well(1.0).unwrap();
        let df = build_distance(&spec, &DistanceOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        df.save(dir.path(), "dist").unwrap();
        let back = DistanceFunction::load(dir.path(), "dist").unwrap();
        assert_eq!(back.header(), df.header());
        for &r in &[0.0, 0.37, 1.9, 2.5, df.r1, 7.0, 100.0] {
            assert!((back.f(r) - df.f(r)).abs() < 1e-13);
            assert!((back.fpp(r) - df.fpp(r)).abs() < 1e-6);
        }
        let text = std::fs::read_to_string(dir.path().join("dist.csv")).unwrap();
        assert!(text.starts_with("r,phi,Phi,g,f,fp,fpp\n"));
    }
}
