//! The density table: `x,lower,upper,kde,local_se,pass`, one row per grid point,
//! floats with 17 significant digits and `pass` as `true`/`false`.

use crate::error::CliResult;
use fbsde_core::container::fmt_f64;
use fbsde_core::density::{DensityEnvelope, EmpiricalDensity};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

pub const DENSITY_HEADER: [&str; 6] = ["x", "lower", "upper", "kde", "local_se", "pass"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub x: f64,
    pub lower: f64,
    pub upper: f64,
    pub kde: f64,
    pub local_se: f64,
    pub pass: bool,
}

/// Envelope curves and the estimate at each grid point; a point passes when
/// lower − slack·se ≤ kde ≤ upper + slack·se.
pub fn density_rows(env: &DensityEnvelope, emp: &EmpiricalDensity, grid: &[f64], slack: f64) -> CliResult<Vec<DensityRow>> {
    grid.iter()
        .map(|&x| {
            let (lower, upper) = (env.lower(x)?, env.upper(x)?);
            let (kde, local_se) = emp.at(x);
            let pass = lower - slack * local_se <= kde && kde <= upper + slack * local_se;
            Ok(DensityRow { x, lower, upper, kde, local_se, pass })
        })
        .collect()
}

pub fn emit_density_table<W: Write>(env: &DensityEnvelope, emp: &EmpiricalDensity, grid: &[f64], slack: f64, out: W) -> CliResult<()> {
    write_density_rows(&density_rows(env, emp, grid, slack)?, out)
}

pub fn write_density_rows<W: Write>(rows: &[DensityRow], out: W) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DENSITY_HEADER)?;
    for r in rows {
        w.write_record([fmt_f64(r.x), fmt_f64(r.lower), fmt_f64(r.upper), fmt_f64(r.kde), fmt_f64(r.local_se), r.pass.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_density_table<R: Read>(input: R) -> CliResult<Vec<DensityRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != DENSITY_HEADER {
        return Err(crate::error::CliError::Io(format!("unexpected density table header {header:?}")));
    }
    Ok(r.deserialize().collect::<Result<Vec<DensityRow>, _>>()?)
}
