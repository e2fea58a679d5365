//! `EQTN` binary container: magic, `u32` rank, `u32` dims, then the
//! payload as little-endian `f32`. Several records may be concatenated in one
//! file (checkpoints).

use super::Tensor;
use crate::error::{Error, Result};
use std::io::{Read, Write};

pub const MAGIC: &[u8; 4] = b"EQTN";

pub fn write_tensor(w: &mut impl Write, t: &Tensor) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(t.rank() as u32).to_le_bytes())?;
    for &d in t.shape() {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(4 * t.numel());
    for &v in t.data() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Reads one record; `Ok(None)` on a clean end of stream.
fn read_record(r: &mut impl Read) -> Result<Option<Tensor>> {
    let mut magic = [0u8; 4];
    let mut filled = 0;
    while filled < 4 {
        let n = r.read(&mut magic[filled..])?;
        if n == 0 {
            if filled == 0 {
                return Ok(None);
            }
            return Err(Error::Format {
                what: "EQTN record",
                detail: "truncated magic".into(),
            });
        }
        filled += n;
    }
    if &magic != MAGIC {
        return Err(Error::Format {
            what: "EQTN record",
            detail: format!("bad magic {magic:?}"),
        });
    }
    let rank = read_u32(r)? as usize;
    if rank > 16 {
        return Err(Error::Format {
            what: "EQTN record",
            detail: format!("implausible rank {rank}"),
        });
    }
    let shape = (0..rank).map(|_| read_u32(r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    let n: usize = shape.iter().product();
    let mut buf = vec![0u8; 4 * n];
    r.read_exact(&mut buf)?;
    let data = buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Tensor::new(&shape, data).map(Some)
}

pub fn read_tensor(r: &mut impl Read) -> Result<Tensor> {
    read_record(r)?.ok_or_else(|| Error::Format {
        what: "EQTN record",
        detail: "empty stream".into(),
    })
}

pub fn write_tensors(w: &mut impl Write, ts: &[Tensor]) -> Result<()> {
    ts.iter().try_for_each(|t| write_tensor(w, t))
}

pub fn read_tensors(r: &mut impl Read) -> Result<Vec<Tensor>> {
    let mut out = Vec::new();
    while let Some(t) = read_record(r)? {
        out.push(t);
    }
    Ok(out)
}
