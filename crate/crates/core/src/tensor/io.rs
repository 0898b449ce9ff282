//! Portable tensor files: `"BFPT"`, dtype byte, rank byte, little-endian u32
//! extents, then little-endian values in row-major order.

use std::io::{Read, Write};

use crate::{DType, Error, Real, Result};

use super::Tensor;

pub const TENSOR_MAGIC: &[u8; 4] = b"BFPT";

pub fn write_tensor<T: Real, W: Write>(out: &mut W, t: &Tensor<T>) -> Result<()> {
    let rank =
        u8::try_from(t.shape().len()).map_err(|_| Error::format("tensor", "rank exceeds 255"))?;
    let mut buf = Vec::with_capacity(6 + 4 * t.shape().len() + t.len() * T::DTYPE.size());
    buf.extend_from_slice(TENSOR_MAGIC);
    buf.push(T::DTYPE.code());
    buf.push(rank);
    for &d in t.shape() {
        let d = u32::try_from(d).map_err(|_| Error::format("tensor", "extent exceeds u32"))?;
        buf.extend_from_slice(&d.to_le_bytes());
    }
    for &v in t.data() {
        v.write_le(&mut buf);
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn write_tensors<T: Real, W: Write>(out: &mut W, ts: &[&Tensor<T>]) -> Result<()> {
    ts.iter().try_for_each(|t| write_tensor(out, t))
}

fn read_exact_or_eof<R: Read>(input: &mut R, buf: &mut [u8]) -> Result<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        let n = input.read(&mut buf[filled..])?;
        if n == 0 {
            if filled == 0 {
                return Ok(false);
            }
            return Err(Error::format("tensor", "truncated header"));
        }
        filled += n;
    }
    Ok(true)
}

fn read_one<T: Real, R: Read>(input: &mut R) -> Result<Option<Tensor<T>>> {
    let mut head = [0u8; 6];
    if !read_exact_or_eof(input, &mut head)? {
        return Ok(None);
    }
    if &head[..4] != TENSOR_MAGIC {
        return Err(Error::format("tensor", "bad magic"));
    }
    let dtype = DType::from_code(head[4])
        .ok_or_else(|| Error::format("tensor", format!("unknown dtype code {}", head[4])))?;
    let rank = head[5] as usize;
    let mut dims = vec![0u8; 4 * rank];
    input
        .read_exact(&mut dims)
        .map_err(|_| Error::format("tensor", "truncated extents"))?;
    let shape: Vec<usize> = dims
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize)
        .collect();
    let n: usize = shape.iter().product();
    let mut raw = vec![0u8; n * dtype.size()];
    input
        .read_exact(&mut raw)
        .map_err(|_| Error::format("tensor", "truncated values"))?;
    let data = match dtype {
        DType::F32 => raw
            .chunks_exact(4)
            .map(|c| T::of(f32::read_le(c) as f64))
            .collect(),
        DType::F64 => raw
            .chunks_exact(8)
            .map(|c| T::of(f64::read_le(c)))
            .collect(),
    };
    Tensor::from_vec(&shape, data).map(Some)
}

/// Reads one tensor, converting to `T` if the stored dtype differs.
pub fn read_tensor<T: Real, R: Read>(input: &mut R) -> Result<Tensor<T>> {
    read_one(input)?.ok_or_else(|| Error::format("tensor", "empty input"))
}

/// Reads consecutive tensor records until end of input.
pub fn read_tensors<T: Real, R: Read>(input: &mut R) -> Result<Vec<Tensor<T>>> {
    let mut out = Vec::new();
    while let Some(t) = read_one(input)? {
        out.push(t);
    }
    Ok(out)
}
