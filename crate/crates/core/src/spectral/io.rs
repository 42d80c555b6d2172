//! Binary field dumps and CSV density exports.
//!
//! Dump layout (little endian): `b"GPEF"`, version `u32`, `d` as `u32`,
//! `M` as `u32`, `L` as `f64`, then `M^d` pairs `(re, im)` of `f64` in
//! row-major node order.

use std::io::{Read, Write};

use num_complex::Complex64;

use super::{Grid, GridSpec, WaveField};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"GPEF";
pub const VERSION: u32 = 1;

pub fn write_field<W: Write>(mut w: W, phi: &WaveField) -> Result<()> {
    let spec = phi.grid().spec();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(spec.dim as u32).to_le_bytes())?;
    w.write_all(&(spec.points as u32).to_le_bytes())?;
    w.write_all(&spec.half_width.to_le_bytes())?;
    let mut buf = Vec::with_capacity(16 * phi.values().len());
    for z in phi.values() {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_field<R: Read>(mut r: R) -> Result<WaveField> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let dim = read_u32(&mut r)? as usize;
    let points = read_u32(&mut r)? as usize;
    let mut l = [0u8; 8];
    r.read_exact(&mut l)?;
    let spec = GridSpec::new(dim, f64::from_le_bytes(l), points)?;
    let grid = Grid::new(spec)?;
    let mut raw = vec![0u8; 16 * grid.len()];
    r.read_exact(&mut raw)?;
    let values = raw
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect();
    WaveField::from_values(&grid, values)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// One row per node: coordinates then `|phi|^2`.
pub fn write_density_csv<W: Write>(mut w: W, phi: &WaveField) -> Result<()> {
    let grid = phi.grid();
    let d = grid.dim();
    let header = ["x", "y", "z"][..d].join(",");
    writeln!(w, "{header},density")?;
    for (idx, z) in phi.values().iter().enumerate() {
        let x = grid.node(idx);
        for c in &x[..d] {
            write!(w, "{c},")?;
        }
        writeln!(w, "{}", z.norm_sqr())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let grid = Grid::new(GridSpec::new(2, 3.5, 4).unwrap()).unwrap();
        let phi = WaveField::from_fn(&grid, |x| Complex64::new(x[0], x[1]));
        let mut buf = Vec::new();
        write_field(&mut buf, &phi).unwrap();
        assert_eq!(&buf[..4], b"GPEF");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(buf[12..16].try_into().unwrap()), 4);
        assert_eq!(f64::from_le_bytes(buf[16..24].try_into().unwrap()), 3.5);
        assert_eq!(buf.len(), 24 + 16 * 16);
        // second node is (x0, y1)
        let re = f64::from_le_bytes(buf[40..48].try_into().unwrap());
        let im = f64::from_le_bytes(buf[48..56].try_into().unwrap());
        assert_eq!((re, im), (-3.5, -3.5 + 1.75));

        let back = read_field(&buf[..]).unwrap();
        assert_eq!(back.values(), phi.values());
    }

    #[test]
    fn rejects_bad_magic() {
        let err = read_field(&b"NOPE\x01\x00\x00\x00"[..]).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn density_rows() {
        let grid = Grid::new(GridSpec::new(1, 1.0, 4).unwrap()).unwrap();
        let phi = WaveField::from_fn(&grid, |x| Complex64::new(x[0], 1.0));
        let mut buf = Vec::new();
        write_density_csv(&mut buf, &phi).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "x,density");
        assert_eq!(lines[1], "-1,2");
        assert_eq!(lines.len(), 5);
    }
}
