//! Binary snapshots of a [`State`].
//!
//! All numbers are little-endian. Layout:
//!
//! | bytes | content |
//! |-------|---------|
//! | 8     | magic `PEMSNAP1` |
//! | 8     | system tag (`u64`: 0 = mhd-thin, 1 = smhd, 2 = pem) |
//! | 8 × 5 | `ε`, `t`, `L1`, `L2`, `Lz` (`f64`) |
//! | 8 × 3 | `Nx`, `Ny`, `Nz` (`u64`) |
//! | 8     | number of field blocks (`u64`, always 7) |
//! | …     | field blocks `u1 u2 u3 b1 b2 b3 p` |
//!
//! Each block holds `Nx·Ny·Nz` complex coefficients as `(re, im)` pairs of
//! `f64`, with `kx` the slowest index and `kz` the fastest. Coefficients are
//! those of the forward transform, which divides by the number of grid
//! points, so the zero mode is the mean. The dealiasing fraction is not
//! stored and is supplied when reading.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fields::{State, SystemKind};
use crate::grid::{Fraction, Grid, GridSpec};

pub const MAGIC: &[u8; 8] = b"PEMSNAP1";
const FIELD_COUNT: u64 = 7;

pub fn write_snapshot<W: Write>(state: &State, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    let spec = state.grid.spec();
    w.write_all(MAGIC)?;
    w.write_all(&state.system.tag().to_le_bytes())?;
    for v in [state.eps, state.t, spec.l1, spec.l2, spec.lz] {
        w.write_all(&v.to_le_bytes())?;
    }
    for n in [spec.nx, spec.ny, spec.nz] {
        w.write_all(&(n as u64).to_le_bytes())?;
    }
    w.write_all(&FIELD_COUNT.to_le_bytes())?;
    for f in state.fields() {
        // standard layout iterates with the last axis fastest
        for c in f.coeffs.iter() {
            w.write_all(&c.re.to_le_bytes())?;
            w.write_all(&c.im.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|e| Error::Snapshot(format!("truncated header: {e}")))?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

pub fn read_snapshot<R: Read>(reader: R, dealias: Fraction) -> Result<State> {
    let mut r = BufReader::new(reader);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|e| Error::Snapshot(format!("truncated header: {e}")))?;
    if &magic != MAGIC {
        return Err(Error::Snapshot(format!("bad magic {magic:?}")));
    }
    let tag = read_u64(&mut r)?;
    let system = SystemKind::from_tag(tag)
        .ok_or_else(|| Error::Snapshot(format!("unknown system tag {tag}")))?;
    let eps = read_f64(&mut r)?;
    let t = read_f64(&mut r)?;
    let (l1, l2, lz) = (read_f64(&mut r)?, read_f64(&mut r)?, read_f64(&mut r)?);
    let mut n = [0usize; 3];
    for v in &mut n {
        *v = usize::try_from(read_u64(&mut r)?)
            .map_err(|_| Error::Snapshot("grid size overflows usize".into()))?;
    }
    let count = read_u64(&mut r)?;
    if count != FIELD_COUNT {
        return Err(Error::Snapshot(format!("expected {FIELD_COUNT} field blocks, found {count}")));
    }
    let spec = GridSpec::new(l1, l2, lz, n[0], n[1], n[2], dealias)?;
    let grid = Grid::new(spec);
    let mut state = State::zeros(&grid, system, eps);
    state.t = t;
    let mut buf = [0u8; 16];
    for f in state.fields_mut() {
        for c in f.coeffs.iter_mut() {
            r.read_exact(&mut buf)
                .map_err(|e| Error::Snapshot(format!("truncated field block: {e}")))?;
            let re = f64::from_le_bytes(buf[..8].try_into().unwrap());
            let im = f64::from_le_bytes(buf[8..].try_into().unwrap());
            *c = Complex64::new(re, im);
        }
    }
    if r.read(&mut buf)? != 0 {
        return Err(Error::Snapshot("trailing bytes after last field block".into()));
    }
    Ok(state)
}

pub fn save(state: &State, path: &Path) -> Result<()> {
    write_snapshot(state, File::create(path)?)
}

pub fn load(path: &Path, dealias: Fraction) -> Result<State> {
    read_snapshot(File::open(path)?, dealias)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{random_admissible_state, InitParams};
    use crate::grid::make_grid;

    fn sample() -> State {
        let g = make_grid(2.0, 3.0, 2.0, 8, 6, 4, Fraction::TWO_THIRDS).unwrap();
        let mut s = random_admissible_state(&g, &InitParams { seed: 4, decay: 3.0, amplitude: 0.5 })
            .unwrap()
            .as_system(SystemKind::Smhd, 0.25);
        s.t = 1.5;
        s.p.coeffs[[1, 2, 0]] = Complex64::new(0.5, -0.25);
        s
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let s = sample();
        let mut bytes = Vec::new();
        write_snapshot(&s, &mut bytes).unwrap();
        assert_eq!(bytes.len(), 8 * 11 + 7 * 8 * 6 * 4 * 16);
        let back = read_snapshot(bytes.as_slice(), Fraction::TWO_THIRDS).unwrap();
        assert_eq!(back.system, SystemKind::Smhd);
        assert_eq!((back.eps, back.t), (0.25, 1.5));
        assert_eq!(back.grid.spec(), s.grid.spec());
        for (a, b) in back.fields().iter().zip(s.fields()) {
            assert_eq!(a.coeffs, b.coeffs);
            assert_eq!(a.parity, b.parity);
        }
    }

    #[test]
    fn layout_is_kx_major() {
        let s = sample();
        let mut bytes = Vec::new();
        write_snapshot(&s, &mut bytes).unwrap();
        // pressure block is the last one; coefficient (1, 2, 0) sits at 1·(6·4) + 2·4 + 0
        let base = 8 * 11 + 6 * (8 * 6 * 4 * 16) + (24 + 8) * 16;
        let re = f64::from_le_bytes(bytes[base..base + 8].try_into().unwrap());
        let im = f64::from_le_bytes(bytes[base + 8..base + 16].try_into().unwrap());
        assert_eq!((re, im), (0.5, -0.25));
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 1);
    }

    #[test]
    fn malformed_input_is_rejected() {
        let s = sample();
        let mut bytes = Vec::new();
        write_snapshot(&s, &mut bytes).unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_snapshot(bad.as_slice(), Fraction::ONE), Err(Error::Snapshot(_))));

        let short = &bytes[..bytes.len() - 1];
        assert!(matches!(read_snapshot(short, Fraction::ONE), Err(Error::Snapshot(_))));

        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(read_snapshot(long.as_slice(), Fraction::ONE), Err(Error::Snapshot(_))));

        let mut tag = bytes;
        tag[8] = 9;
        assert!(matches!(read_snapshot(tag.as_slice(), Fraction::ONE), Err(Error::Snapshot(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bin");
        let s = sample();
        save(&s, &path).unwrap();
        let back = load(&path, Fraction::TWO_THIRDS).unwrap();
        assert_eq!(back.uh[1].coeffs, s.uh[1].coeffs);
    }
}
