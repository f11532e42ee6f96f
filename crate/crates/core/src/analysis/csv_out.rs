use std::path::Path;

use crate::error::{Error, Result};
use crate::io::write_atomic;

use super::{GateHistogram, GradBound, TimescaleReport};

fn finish(path: &Path, w: csv::Writer<Vec<u8>>) -> Result<()> {
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    write_atomic(path, &bytes)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

/// Columns `bin_lo,bin_hi,count`.
pub fn write_histogram_csv(path: &Path, h: &GateHistogram) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["bin_lo", "bin_hi", "count"]).map_err(|e| csv_err(path, e))?;
    for (k, c) in h.counts.iter().enumerate() {
        w.serialize((h.edges[k], h.edges[k + 1], c)).map_err(|e| csv_err(path, e))?;
    }
    finish(path, w)
}

/// Columns `f,r,g`, one row per grid point.
pub fn write_contour_csv(path: &Path, f_grid: &[f64], r_grid: &[f64], g: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["f", "r", "g"]).map_err(|e| csv_err(path, e))?;
    for (i, &r) in r_grid.iter().enumerate() {
        for (j, &f) in f_grid.iter().enumerate() {
            w.serialize((f, r, g[i][j])).map_err(|e| csv_err(path, e))?;
        }
    }
    finish(path, w)
}

/// Columns `g,min,max,standard`.
pub fn write_bounds_csv(path: &Path, bounds: &[GradBound]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["g", "min", "max", "standard"]).map_err(|e| csv_err(path, e))?;
    for b in bounds {
        w.serialize((b.g, b.min, b.max, b.standard)).map_err(|e| csv_err(path, e))?;
    }
    finish(path, w)
}

/// Columns `unit,decay_period`.
pub fn write_timescale_csv(path: &Path, r: &TimescaleReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["unit", "decay_period"]).map_err(|e| csv_err(path, e))?;
    for (k, d) in r.periods.iter().enumerate() {
        w.serialize((k, d)).map_err(|e| csv_err(path, e))?;
    }
    finish(path, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{g_contour, gate_histogram, grad_norm_bounds};
    use crate::exec::ExecPolicy;
    use crate::ndmath::Matrix;

    #[test]
    fn headers_and_row_counts() {
        let dir = tempfile::tempdir().unwrap();
        let h = gate_histogram(&[Matrix::filled(2, 3, 0.25)]).unwrap();
        let p = dir.path().join("h.csv");
        write_histogram_csv(&p, &h).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("bin_lo,bin_hi,count\n0.0,0.02,0\n"));
        assert_eq!(text.lines().count(), 51);

        let c = g_contour(&[0.0, 1.0], &[0.5]).unwrap();
        let p = dir.path().join("c.csv");
        write_contour_csv(&p, &[0.0, 1.0], &[0.5], &c).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "f,r,g\n0.0,0.5,0.0\n1.0,0.5,1.0\n");

        let b = grad_norm_bounds(&[0.5], ExecPolicy::Sequential).unwrap();
        let p = dir.path().join("b.csv");
        write_bounds_csv(&p, &b).unwrap();
        assert!(std::fs::read_to_string(&p).unwrap().starts_with("g,min,max,standard\n0.5,"));
    }
}
