//! `NDT1` binary tensor encoding: magic, u8 rank, u32 extents, f64 payload,
//! all little-endian.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::ndtensor::tensor::{check_shape, Tensor};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"NDT1";

pub fn write_tensor<T: Scalar, W: Write>(out: &mut W, t: &Tensor<T>) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&[t.rank() as u8])?;
    for &e in t.shape() {
        let e = u32::try_from(e).map_err(|_| Error::Format(format!("extent {e} exceeds u32")))?;
        out.write_all(&e.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(t.numel() * 8);
    for v in t.data() {
        buf.extend_from_slice(&v.to_f64_lossless().to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_tensor<T: Scalar, R: Read>(inp: &mut R) -> Result<Tensor<T>> {
    let mut magic = [0u8; 4];
    inp.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad tensor magic {magic:?}")));
    }
    let mut rank = [0u8; 1];
    inp.read_exact(&mut rank)?;
    let mut shape = Vec::with_capacity(rank[0] as usize);
    for _ in 0..rank[0] {
        let mut e = [0u8; 4];
        inp.read_exact(&mut e)?;
        shape.push(u32::from_le_bytes(e) as usize);
    }
    check_shape(&shape).map_err(|e| Error::Format(e.to_string()))?;
    let n: usize = shape.iter().product();
    let mut payload = vec![0u8; n * 8];
    inp.read_exact(&mut payload)?;
    let data = payload
        .chunks_exact(8)
        .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
        .collect();
    Tensor::new(&shape, data)
}

pub fn encode<T: Scalar>(t: &Tensor<T>) -> Vec<u8> {
    let mut v = Vec::new();
    write_tensor(&mut v, t).expect("writing to a Vec cannot fail");
    v
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<Tensor<T>> {
    let mut cur = bytes;
    let t = read_tensor(&mut cur)?;
    if !cur.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes after tensor", cur.len())));
    }
    Ok(t)
}
