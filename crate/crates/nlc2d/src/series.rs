//! Energy time series as CSV.
//!
//! Columns, in order: `t, kinetic, dirichlet, penalty, dissipation, total,
//! div_max, dist_max`. `dissipation` is cumulative and `total` is the sum of
//! the three energy terms. Values are written in shortest round-trip form.

use std::path::Path;

use nlc2d_core::experiments::EnergyRow;
use serde::{Deserialize, Serialize};

pub const COLUMNS: [&str; 8] = ["t", "kinetic", "dirichlet", "penalty", "dissipation", "total", "div_max", "dist_max"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyRecord {
    pub t: f64,
    pub kinetic: f64,
    pub dirichlet: f64,
    pub penalty: f64,
    pub dissipation: f64,
    pub total: f64,
    pub div_max: f64,
    pub dist_max: f64,
}

impl From<&EnergyRow> for EnergyRecord {
    fn from(r: &EnergyRow) -> Self {
        let e = &r.energy;
        Self {
            t: r.t,
            kinetic: e.kinetic,
            dirichlet: e.dirichlet,
            penalty: e.penalty,
            dissipation: e.cumulative_dissipation,
            total: e.total(),
            div_max: r.div_max,
            dist_max: r.dist_max,
        }
    }
}

/// Incremental writer, so long runs keep their history on failure.
pub struct EnergyCsv {
    inner: csv::Writer<std::fs::File>,
}

impl EnergyCsv {
    pub fn create(path: &Path) -> Result<Self, csv::Error> {
        Ok(Self { inner: csv::Writer::from_path(path)? })
    }

    pub fn push(&mut self, row: &EnergyRow) -> Result<(), csv::Error> {
        self.inner.serialize(EnergyRecord::from(row))?;
        self.inner.flush()?;
        Ok(())
    }
}

pub fn write_energy_csv(path: &Path, rows: &[EnergyRow]) -> Result<(), csv::Error> {
    let mut w = EnergyCsv::create(path)?;
    rows.iter().try_for_each(|r| w.push(r))
}

pub fn read_energy_csv(path: &Path) -> Result<Vec<EnergyRecord>, csv::Error> {
    csv::Reader::from_path(path)?.deserialize().collect()
}

/// Write any serializable rows as CSV with a header.
pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nlc2d_core::diagnostics::EnergyReport;

    #[test]
    fn header_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        let energy = EnergyReport {
            kinetic: 0.1,
            dirichlet: 1.0 / 3.0,
            penalty: 1e-300,
            cumulative_dissipation: 0.0,
            e0: 1.0,
            lambda1: 1.0,
        };
        let row = EnergyRow { t: 0.5, energy, div_max: 1e-17, dist_max: 0.0 };
        write_energy_csv(&path, &[row, row]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), COLUMNS.join(","));
        let back = read_energy_csv(&path).unwrap();
        assert_eq!(back, vec![EnergyRecord::from(&row); 2]);
    }
}
