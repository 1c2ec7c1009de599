//! `CRR1` encoder checkpoints.
//!
//! ```text
//! "CRR1" | u16 version | u8 kind (0 ConvRR, 1 FCRR) | u16 depth | u16 ws
//!        | f32 sf | u32 d″
//! per tensor: u8 rank | rank × u32 extent | f32 values
//! u32 CRC32 (IEEE) of every preceding byte
//! ```
//!
//! ConvRR stores `kernels, bias` per block; FCRR stores `weight, bias` with
//! depth 1 and ws 0. Everything is little-endian.

use std::io::{self, Read};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{ConvBlock, ConvRRParams, Encoder, FCRRParams};
use crate::embedding::read_magic;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"CRR1";
const VERSION: u16 = 1;
const WHAT: &str = "CRR1 checkpoint";

fn write_tensor(out: &mut Vec<u8>, t: &Tensor) {
    out.push(t.rank() as u8);
    for &s in t.shape() {
        out.write_u32::<LittleEndian>(s as u32).expect("Vec write");
    }
    for &x in t.data() {
        out.write_f32::<LittleEndian>(x as f32).expect("Vec write");
    }
}

pub fn write_checkpoint(encoder: &Encoder) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    let (kind, depth, window) = match encoder {
        Encoder::Convrr(p) => (0u8, p.depth() as u16, p.window as u16),
        Encoder::Fcrr(_) => (1u8, 1u16, 0u16),
    };
    out.write_u16::<LittleEndian>(VERSION).expect("Vec write");
    out.push(kind);
    out.write_u16::<LittleEndian>(depth).expect("Vec write");
    out.write_u16::<LittleEndian>(window).expect("Vec write");
    out.write_f32::<LittleEndian>(encoder.scale() as f32).expect("Vec write");
    out.write_u32::<LittleEndian>(encoder.dim() as u32).expect("Vec write");
    for t in encoder.params() {
        write_tensor(&mut out, t);
    }
    let crc = crc32fast::hash(&out);
    out.write_u32::<LittleEndian>(crc).expect("Vec write");
    out
}

fn eof(e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::format(WHAT, "truncated payload")
    } else {
        Error::format(WHAT, e.to_string())
    }
}

fn read_tensor<R: Read>(r: &mut R, expected: &[usize]) -> Result<Tensor> {
    let rank = r.read_u8().map_err(eof)? as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(r.read_u32::<LittleEndian>().map_err(eof)? as usize);
    }
    if shape != expected {
        return Err(Error::format(
            WHAT,
            format!("tensor shape {shape:?}, header implies {expected:?}"),
        ));
    }
    let mut values = vec![0f32; expected.iter().product()];
    r.read_f32_into::<LittleEndian>(&mut values).map_err(eof)?;
    Tensor::new(shape, values.into_iter().map(f64::from).collect())
        .map_err(|e| Error::format(WHAT, e.to_string()))
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<Encoder> {
    let mut r = bytes;
    read_magic(&mut r, CHECKPOINT_MAGIC, WHAT)?;
    if bytes.len() < 8 + 4 {
        return Err(Error::format(WHAT, "truncated payload"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));

    let mut r = &body[4..];
    let version = r.read_u16::<LittleEndian>().map_err(eof)?;
    if version != VERSION {
        return Err(Error::format(WHAT, format!("unsupported version {version}")));
    }
    let kind = r.read_u8().map_err(eof)?;
    let depth = r.read_u16::<LittleEndian>().map_err(eof)? as usize;
    let window = r.read_u16::<LittleEndian>().map_err(eof)? as usize;
    let scale = f64::from(r.read_f32::<LittleEndian>().map_err(eof)?);
    let dim = r.read_u32::<LittleEndian>().map_err(eof)? as usize;
    if dim == 0 {
        return Err(Error::format(WHAT, "zero width"));
    }
    let encoder = match kind {
        0 => {
            if depth == 0 || window == 0 {
                return Err(Error::format(WHAT, "zero depth or window"));
            }
            let blocks = (0..depth)
                .map(|_| {
                    Ok(ConvBlock {
                        kernels: read_tensor(&mut r, &[dim, window, dim])?,
                        bias: read_tensor(&mut r, &[dim])?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Encoder::Convrr(ConvRRParams::new(blocks, window, scale).map_err(|e| Error::format(WHAT, e.to_string()))?)
        }
        1 => {
            let weight = read_tensor(&mut r, &[dim, dim])?;
            let bias = read_tensor(&mut r, &[dim])?;
            Encoder::Fcrr(FCRRParams::new(weight, bias, scale)?)
        }
        other => return Err(Error::format(WHAT, format!("unknown encoder kind {other}"))),
    };
    if !r.is_empty() {
        return Err(Error::format(WHAT, "trailing bytes before checksum"));
    }
    if crc32fast::hash(body) != stored {
        return Err(Error::format(WHAT, "checksum mismatch"));
    }
    Ok(encoder)
}
