//! Columnar binary containers and CSV tables for ensembles and PDE solutions.
//!
//! Both binary formats are little-endian. An ensemble file is
//!
//! ```text
//! "FBMENS01" | kind: u64 (0 fbm, 1 wiener integral) | H: f64 | seed: u64
//! | m: u64 | grid: m × f64 | n: u64 | column 0: n × f64 | … | column m−1
//! ```
//!
//! and a solution file is
//!
//! ```text
//! "PDESOL01" | meta length: u64 | meta: JSON bytes | nx: u64 | x_lo: f64 | x_hi: f64
//! | L: u64 | times: L × f64 | level 0: (nx+1) × f64 | … | level L−1
//! ```
//!
//! Only u is stored; derivatives are recomputed on load exactly as the solver does.

use crate::coeff::TimeGrid;
use crate::error::{LabError, Result};
use crate::fbm::{EnsembleKind, FbmEnsemble};
use crate::pde::{Field, PdeSolution, SchemeMeta};
use std::io::{Read, Write};

pub const ENSEMBLE_MAGIC: &[u8; 8] = b"FBMENS01";
pub const SOLUTION_MAGIC: &[u8; 8] = b"PDESOL01";

/// Locale-independent float text with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

struct Writer<W: Write>(W);

impl<W: Write> Writer<W> {
    fn u64(&mut self, v: u64) -> Result<()> {
        Ok(self.0.write_all(&v.to_le_bytes())?)
    }
    fn f64(&mut self, v: f64) -> Result<()> {
        Ok(self.0.write_all(&v.to_le_bytes())?)
    }
    fn f64s(&mut self, v: &[f64]) -> Result<()> {
        let mut buf = Vec::with_capacity(8 * v.len());
        for x in v {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        Ok(self.0.write_all(&buf)?)
    }
}

struct Reader<R: Read>(R);

impl<R: Read> Reader<R> {
    fn bytes8(&mut self) -> Result<[u8; 8]> {
        let mut b = [0u8; 8];
        self.0.read_exact(&mut b).map_err(|e| LabError::Format(format!("truncated container: {e}")))?;
        Ok(b)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes8()?))
    }
    fn len(&mut self, what: &str) -> Result<usize> {
        let v = self.u64()?;
        if v > (1 << 40) {
            return Err(LabError::Format(format!("implausible {what} count {v}")));
        }
        Ok(v as usize)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes8()?))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let mut buf = vec![0u8; 8 * n];
        self.0.read_exact(&mut buf).map_err(|e| LabError::Format(format!("truncated container: {e}")))?;
        Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
    fn magic(&mut self, want: &[u8; 8]) -> Result<()> {
        let got = self.bytes8()?;
        if &got != want {
            return Err(LabError::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&got),
                String::from_utf8_lossy(want)
            )));
        }
        Ok(())
    }
}

pub fn write_ensemble<W: Write>(e: &FbmEnsemble, out: W) -> Result<()> {
    let mut w = Writer(out);
    w.0.write_all(ENSEMBLE_MAGIC)?;
    w.u64(match e.kind {
        EnsembleKind::Fbm => 0,
        EnsembleKind::WienerIntegral => 1,
    })?;
    w.f64(e.hurst)?;
    w.u64(e.seed)?;
    w.u64(e.grid.len() as u64)?;
    w.f64s(e.grid.points())?;
    w.u64(e.n_paths() as u64)?;
    for j in 0..e.grid.len() {
        w.f64s(&e.column(j))?;
    }
    Ok(())
}

pub fn read_ensemble<R: Read>(input: R) -> Result<FbmEnsemble> {
    let mut r = Reader(input);
    r.magic(ENSEMBLE_MAGIC)?;
    let kind = match r.u64()? {
        0 => EnsembleKind::Fbm,
        1 => EnsembleKind::WienerIntegral,
        k => return Err(LabError::Format(format!("unknown ensemble kind {k}"))),
    };
    let hurst = r.f64()?;
    let seed = r.u64()?;
    let m = r.len("grid")?;
    let grid = TimeGrid::new(r.f64s(m)?)?;
    let n = r.len("path")?;
    let mut data = vec![0.0; n * m];
    for j in 0..m {
        for (i, v) in r.f64s(n)?.into_iter().enumerate() {
            data[i * m + j] = v;
        }
    }
    FbmEnsemble::from_parts(hurst, grid, kind, seed, n, data)
}

/// One row per path: `path, X(t_0), …, X(t_{m−1})`, with the times in the header.
pub fn write_ensemble_csv<W: Write>(e: &FbmEnsemble, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["path".to_string()];
    header.extend(e.grid.points().iter().map(|t| fmt_f64(*t)));
    w.write_record(&header)?;
    for i in 0..e.n_paths() {
        let mut row = vec![i.to_string()];
        row.extend(e.path(i).iter().map(|v| fmt_f64(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_solution<W: Write>(s: &PdeSolution, out: W) -> Result<()> {
    let mut w = Writer(out);
    w.0.write_all(SOLUTION_MAGIC)?;
    let meta = serde_json::to_vec(&s.meta)?;
    w.u64(meta.len() as u64)?;
    w.0.write_all(&meta)?;
    w.u64(s.nx as u64)?;
    w.f64(s.x_lo)?;
    w.f64(s.x_hi)?;
    w.u64(s.times.len() as u64)?;
    w.f64s(&s.times)?;
    for l in 0..s.n_levels() {
        w.f64s(s.level(Field::U, l))?;
    }
    Ok(())
}

pub fn read_solution<R: Read>(input: R) -> Result<PdeSolution> {
    let mut r = Reader(input);
    r.magic(SOLUTION_MAGIC)?;
    let ml = r.len("metadata byte")?;
    let mut meta = vec![0u8; ml];
    r.0.read_exact(&mut meta).map_err(|e| LabError::Format(format!("truncated container: {e}")))?;
    let meta: SchemeMeta = serde_json::from_slice(&meta)?;
    let nx = r.len("cell")?;
    let x_lo = r.f64()?;
    let x_hi = r.f64()?;
    let nl = r.len("level")?;
    let times = r.f64s(nl)?;
    let levels = (0..nl).map(|_| r.f64s(nx + 1)).collect::<Result<Vec<_>>>()?;
    PdeSolution::from_u_levels(times, x_lo, x_hi, nx, levels, meta)
}

/// `x, u, ux, uxx` at time t.
pub fn write_solution_slice_csv<W: Write>(s: &PdeSolution, t: f64, out: W) -> Result<()> {
    let u = s.slice(Field::U, t)?;
    let ux = s.slice(Field::Ux, t)?;
    let uxx = s.slice(Field::Uxx, t)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "u", "ux", "uxx"])?;
    for i in 0..u.len() {
        w.write_record([fmt_f64(s.x(i)), fmt_f64(u[i]), fmt_f64(ux[i]), fmt_f64(uxx[i])])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::{sample_paths, Integrand};

    #[test]
    fn ensemble_round_trip() {
        let g = TimeGrid::uniform(1.0, 8).unwrap();
        let e = sample_paths(0.7, &g, Integrand::Unit, 33, 5).unwrap();
        let mut buf = Vec::new();
        write_ensemble(&e, &mut buf).unwrap();
        assert_eq!(&buf[..8], ENSEMBLE_MAGIC);
        let back = read_ensemble(buf.as_slice()).unwrap();
        assert_eq!(back, e);
        assert!(read_ensemble(&buf[..buf.len() - 3]).is_err());
    }

    #[test]
    fn float_text_round_trips() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }
}
