//! CSV and JSON output.
//!
//! CSV files carry data only; the parameters, seed and code version of a run
//! go into a sidecar JSON object next to them.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::equilibria::Matrix6;
use crate::error::Result;
use crate::model::{MomentVector, MOMENT_NAMES};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Full double precision: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn moment_header() -> String {
    let mut h = String::from("t");
    for name in MOMENT_NAMES {
        h.push(',');
        h.push_str(name);
    }
    h
}

/// Writes a moment path (simulated or integrated) in the shared schema.
pub fn write_moments_csv(path: &Path, times: &[f64], moments: &[MomentVector]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", moment_header())?;
    for (t, m) in times.iter().zip(moments) {
        write!(w, "{}", fmt_f64(*t))?;
        for x in m.0 {
            write!(w, ",{}", fmt_f64(x))?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads back a file written by [`write_moments_csv`].
pub fn read_moments_csv(path: &Path) -> Result<(Vec<f64>, Vec<MomentVector>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != moment_header() {
        return Err(crate::Error::Mismatch(format!("unexpected header {header:?}")));
    }
    let mut times = Vec::new();
    let mut moments = Vec::new();
    for line in lines {
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.parse::<f64>().map_err(|e| crate::Error::Mismatch(format!("{s:?}: {e}"))))
            .collect::<Result<_>>()?;
        if vals.len() != 8 {
            return Err(crate::Error::Mismatch(format!("expected 8 columns, got {}", vals.len())));
        }
        times.push(vals[0]);
        let mut m = [0.0; 7];
        m.copy_from_slice(&vals[1..]);
        moments.push(MomentVector(m));
    }
    Ok((times, moments))
}

/// Covariance path: `t` followed by the 36 row-major entries.
pub fn write_covariance_csv(path: &Path, times: &[f64], cov: &[Matrix6]) -> Result<()> {
    const NAMES: [&str; 6] = ["x", "y", "z", "u", "v", "w"];
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "t")?;
    for a in NAMES {
        for b in NAMES {
            write!(w, ",c_{a}{b}")?;
        }
    }
    writeln!(w)?;
    for (t, c) in times.iter().zip(cov) {
        write!(w, "{}", fmt_f64(*t))?;
        for i in 0..6 {
            for j in 0..6 {
                write!(w, ",{}", fmt_f64(c[(i, j)]))?;
            }
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a generic table; `rows` must match the header width.
pub fn write_table_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", header.join(","))?;
    for r in rows {
        debug_assert_eq!(r.len(), header.len());
        writeln!(w, "{}", r.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Pretty-printed JSON.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_roundtrip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let times = [0.0, 0.1, 0.30000000000000004];
        let ms = [
            MomentVector([0.0, 1.0 / 3.0, -0.2, 0.1, 1e-17, -0.999, 0.5]),
            MomentVector([0.02, std::f64::consts::PI / 4.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
            MomentVector([0.0; 7]),
        ];
        write_moments_csv(&p, &times, &ms).unwrap();
        let (t2, m2) = read_moments_csv(&p).unwrap();
        assert_eq!(t2, times);
        assert_eq!(m2, ms);
    }

    #[test]
    fn header_schema() {
        assert_eq!(moment_header(), "t,m_eta,m_sigma,m_omega,m_sigma_omega,m_sigma_eta,m_omega_eta,m_sigma_omega_eta");
    }
}
