//! Grid value-function files.
//!
//! Binary layout (version 1), all fields in the byte order announced by the tag:
//!
//! | field          | type                                   |
//! |----------------|----------------------------------------|
//! | magic          | `b"HJGRID\0\0"`                        |
//! | version        | u32 = 1                                |
//! | endian tag     | u32 = 0x0102_0304                      |
//! | mode           | u8 (0 avoid, 1 reach)                  |
//! | terminal flag  | u8                                     |
//! | dims           | u16                                    |
//! | per dimension  | f64 lower, f64 upper, u64 count, u8 periodic |
//! | slice count    | u64                                    |
//! | times          | f64 × slice count, ascending           |
//! | values         | f64 × slices × nodes, slice-major, grid row-major (last dim fastest) |
//!
//! Files are written little-endian; big-endian files are accepted on read.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{Grid, GridValueFunction, MAX_GRID_DIM};
use crate::dynamics::Mode;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"HJGRID\0\0";
const VERSION: u32 = 1;
const ENDIAN_TAG: u32 = 0x0102_0304;

pub fn write_grid_file(gvf: &GridValueFunction, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    encode(gvf, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn encode<W: Write>(gvf: &GridValueFunction, w: &mut W) -> std::io::Result<()> {
    type E = LittleEndian;
    let grid = gvf.grid();
    w.write_all(MAGIC)?;
    w.write_u32::<E>(VERSION)?;
    w.write_u32::<E>(ENDIAN_TAG)?;
    w.write_u8(match gvf.mode() {
        Mode::Avoid => 0,
        Mode::Reach => 1,
    })?;
    w.write_u8(u8::from(gvf.has_terminal_condition()))?;
    w.write_u16::<E>(grid.dim() as u16)?;
    for d in 0..grid.dim() {
        w.write_f64::<E>(grid.lower()[d])?;
        w.write_f64::<E>(grid.upper()[d])?;
        w.write_u64::<E>(grid.counts()[d] as u64)?;
        w.write_u8(u8::from(grid.is_periodic(d)))?;
    }
    w.write_u64::<E>(gvf.times().len() as u64)?;
    for &t in gvf.times() {
        w.write_f64::<E>(t)?;
    }
    let mut buf = vec![0u8; 8 * 4096];
    for chunk in gvf.values().chunks(4096) {
        E::write_f64_into(chunk, &mut buf[..8 * chunk.len()]);
        w.write_all(&buf[..8 * chunk.len()])?;
    }
    Ok(())
}

pub fn read_grid_file(path: impl AsRef<Path>) -> Result<GridValueFunction> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
    if &magic != MAGIC {
        return Err(Error::malformed(path, "not a grid value-function file"));
    }
    let mut head = [0u8; 8];
    r.read_exact(&mut head).map_err(|e| Error::io(path, e))?;
    if LittleEndian::read_u32(&head[4..]) == ENDIAN_TAG {
        decode::<LittleEndian, _>(&mut r, LittleEndian::read_u32(&head[..4]), path)
    } else if BigEndian::read_u32(&head[4..]) == ENDIAN_TAG {
        decode::<BigEndian, _>(&mut r, BigEndian::read_u32(&head[..4]), path)
    } else {
        Err(Error::malformed(path, "unrecognised endianness tag"))
    }
}

fn decode<E: ByteOrder, R: Read>(r: &mut R, version: u32, path: &Path) -> Result<GridValueFunction> {
    if version != VERSION {
        return Err(Error::malformed(path, format!("unsupported version {version}")));
    }
    let io = |e| Error::io(path, e);
    let mode = match r.read_u8().map_err(io)? {
        0 => Mode::Avoid,
        1 => Mode::Reach,
        m => return Err(Error::malformed(path, format!("bad mode byte {m}"))),
    };
    let terminal = r.read_u8().map_err(io)? != 0;
    let dims = r.read_u16::<E>().map_err(io)? as usize;
    if dims == 0 || dims > MAX_GRID_DIM {
        return Err(Error::malformed(path, format!("unsupported dimension count {dims}")));
    }
    let (mut lower, mut upper, mut counts, mut periodic) = (vec![], vec![], vec![], vec![]);
    for _ in 0..dims {
        lower.push(r.read_f64::<E>().map_err(io)?);
        upper.push(r.read_f64::<E>().map_err(io)?);
        counts.push(r.read_u64::<E>().map_err(io)? as usize);
        periodic.push(r.read_u8().map_err(io)? != 0);
    }
    let grid = Grid::new(lower, upper, counts, periodic).map_err(|e| Error::malformed(path, e.to_string()))?;
    let slices = r.read_u64::<E>().map_err(io)? as usize;
    if slices == 0 || slices > 1 << 20 {
        return Err(Error::malformed(path, format!("implausible slice count {slices}")));
    }
    let mut times = vec![0.0; slices];
    r.read_f64_into::<E>(&mut times).map_err(io)?;
    let total = slices
        .checked_mul(grid.node_count())
        .ok_or_else(|| Error::malformed(path, "value count overflows"))?;
    let mut values = vec![0.0; total];
    r.read_f64_into::<E>(&mut values).map_err(io)?;
    let mut probe = [0u8; 1];
    if r.read(&mut probe).map_err(io)? != 0 {
        return Err(Error::malformed(path, "trailing bytes after value block"));
    }
    GridValueFunction::from_parts(grid, mode, times, values, terminal).map_err(|e| Error::malformed(path, e.to_string()))
}

/// Writes a 2-D slice `(x_a, x_b, value)` at time `t` on the grid nodes of
/// dimensions `a` and `b`; the remaining coordinates come from `fixed`.
pub fn write_slice_csv(
    gvf: &GridValueFunction,
    t: f64,
    dims: (usize, usize),
    fixed: &[f64],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let grid = gvf.grid();
    let (a, b) = dims;
    if a >= grid.dim() || b >= grid.dim() || a == b || fixed.len() != grid.dim() {
        return Err(Error::InvalidParameter("bad slice dimensions".into()));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut x = fixed.to_vec();
    writeln!(w, "x{a},x{b},value").map_err(|e| Error::io(path, e))?;
    for i in 0..grid.counts()[a] {
        for j in 0..grid.counts()[b] {
            x[a] = grid.coord(a, i);
            x[b] = grid.coord(b, j);
            let v = gvf.value(&x, t)?;
            writeln!(w, "{},{},{}", x[a], x[b], v).map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> GridValueFunction {
        let grid = Grid::new(vec![-1.0, 0.0], vec![1.0, 6.0], vec![4, 5], vec![false, true]).unwrap();
        let values: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        GridValueFunction::from_parts(grid, Mode::Reach, vec![0.0, 0.5], values, true).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.grid");
        let gvf = sample();
        write_grid_file(&gvf, &p).unwrap();
        assert_eq!(read_grid_file(&p).unwrap(), gvf);
    }

    #[test]
    fn big_endian_files_are_read() {
        let gvf = sample();
        let mut le = Vec::new();
        encode(&gvf, &mut le).unwrap();
        // re-encode by hand in big-endian
        let mut be = Vec::new();
        be.extend_from_slice(MAGIC);
        be.write_u32::<BigEndian>(VERSION).unwrap();
        be.write_u32::<BigEndian>(ENDIAN_TAG).unwrap();
        be.push(1);
        be.push(1);
        be.write_u16::<BigEndian>(2).unwrap();
        for d in 0..2 {
            be.write_f64::<BigEndian>(gvf.grid().lower()[d]).unwrap();
            be.write_f64::<BigEndian>(gvf.grid().upper()[d]).unwrap();
            be.write_u64::<BigEndian>(gvf.grid().counts()[d] as u64).unwrap();
            be.push(u8::from(gvf.grid().is_periodic(d)));
        }
        be.write_u64::<BigEndian>(2).unwrap();
        for &t in gvf.times() {
            be.write_f64::<BigEndian>(t).unwrap();
        }
        for &v in gvf.values() {
            be.write_f64::<BigEndian>(v).unwrap();
        }
        assert_eq!(be.len(), le.len());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("be.grid");
        std::fs::write(&p, be).unwrap();
        assert_eq!(read_grid_file(&p).unwrap(), gvf);
    }

    #[test]
    fn truncated_and_foreign_files_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = Vec::new();
        encode(&sample(), &mut bytes).unwrap();
        let p = dir.path().join("t.grid");
        std::fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(read_grid_file(&p).is_err());
        std::fs::write(&p, b"definitely not a grid").unwrap();
        assert!(matches!(read_grid_file(&p), Err(Error::Malformed { .. })));
        bytes.push(0);
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_grid_file(&p), Err(Error::Malformed { .. })));
    }

    #[test]
    fn slice_csv_has_one_row_per_node() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        write_slice_csv(&sample(), 0.0, (0, 1), &[0.0, 0.0], &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 1 + 20);
    }
}
