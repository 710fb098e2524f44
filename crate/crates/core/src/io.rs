//! CSV and Touchstone writers for sweep results.

use crate::error::{Error, Result};
use crate::sweep::SweepResult;
use std::fmt::Write as _;
use std::path::Path;

/// dB floor written for vanishing magnitudes.
pub const DB_FLOOR: f64 = -200.0;

fn db(m: f64) -> f64 {
    if m > 0.0 {
        (20.0 * m.log10()).max(DB_FLOOR)
    } else {
        DB_FLOOR
    }
}

/// CSV text: `freq_ghz`, `Sij_db`/`Sij_deg` pairs row-major, then the two
/// flag columns as 0/1.
pub fn csv_string(r: &SweepResult) -> String {
    let p = r.port_ids.len();
    let mut out = String::from("freq_ghz");
    for i in 1..=p {
        for j in 1..=p {
            let _ = write!(out, ",S{i}{j}_db,S{i}{j}_deg");
        }
    }
    out.push_str(",near_resonance,ill_conditioned\n");
    for (k, f) in r.freqs.iter().enumerate() {
        let _ = write!(out, "{}", f * 1e-9);
        for i in 0..p {
            for j in 0..p {
                let s = r.s[k][(i, j)];
                let _ = write!(out, ",{:.9},{:.9}", db(s.norm()), s.im.atan2(s.re).to_degrees());
            }
        }
        let fl = r.flags[k];
        let _ = writeln!(out, ",{},{}", fl.near_resonance as u8, fl.ill_conditioned as u8);
    }
    out
}

pub fn write_csv(r: &SweepResult, path: &Path) -> Result<()> {
    std::fs::write(path, csv_string(r))?;
    Ok(())
}

/// Version-1 Touchstone text for one or two ports.
pub fn touchstone_string(r: &SweepResult) -> Result<String> {
    let p = r.port_ids.len();
    if !(1..=2).contains(&p) {
        return Err(Error::Config(format!(
            "Touchstone output supports 1 or 2 external ports, found {p}; use the CSV writer"
        )));
    }
    let mut out = String::new();
    let _ = writeln!(out, "! ports: {:?}", r.port_ids);
    out.push_str("# GHz S RI R 50\n");
    // Two-port data order is S11 S21 S12 S22.
    let order: &[(usize, usize)] = if p == 1 { &[(0, 0)] } else { &[(0, 0), (1, 0), (0, 1), (1, 1)] };
    for (k, f) in r.freqs.iter().enumerate() {
        let _ = write!(out, "{:e}", f * 1e-9);
        for &(i, j) in order {
            let s = r.s[k][(i, j)];
            let _ = write!(out, " {:e} {:e}", s.re, s.im);
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_touchstone(r: &SweepResult, path: &Path) -> Result<()> {
    let text = touchstone_string(r)?;
    std::fs::write(path, text)?;
    Ok(())
}
