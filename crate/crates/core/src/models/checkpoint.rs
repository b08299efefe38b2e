//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "SENTCLS\0"
//! version  u32      1
//! arch     u8 length + ASCII tag ("fnn" | "cnn" | "rnn" | "lstm")
//! dropout  f64
//! meta     u64 length + UTF-8 bytes (opaque to this module)
//! count    u32
//! tensor*  u16 name length + name, u8 rank, rank x u64 extents, f64 data
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{ArchKind, CnnParams, FnnParams, LstmParams, ModelParams, RnnParams};

const MAGIC: &[u8; 8] = b"SENTCLS\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    /// Caller-defined metadata, stored verbatim.
    pub meta: String,
}

pub fn write_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    encode(ckpt, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    decode(&mut BufReader::new(file))
}

pub fn encode<W: Write>(ckpt: &Checkpoint, w: &mut W) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let tag = ckpt.params.kind().name();
    w.write_all(&[tag.len() as u8])?;
    w.write_all(tag.as_bytes())?;
    w.write_all(&ckpt.params.dropout().to_le_bytes())?;
    w.write_all(&(ckpt.meta.len() as u64).to_le_bytes())?;
    w.write_all(ckpt.meta.as_bytes())?;

    let names = ckpt.params.tensor_names();
    let tensors = ckpt.params.tensors();
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, t) in names.iter().zip(tensors) {
        w.write_all(&(name.len() as u16).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&[t.rank() as u8])?;
        for &e in t.shape() {
            w.write_all(&(e as u64).to_le_bytes())?;
        }
        for &v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn read_bytes<R: Read>(r: &mut R, n: usize) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf).map_err(|_| bad("truncated checkpoint"))?;
    Ok(buf)
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|_| bad("truncated checkpoint"))?;
    Ok(buf)
}

pub fn decode<R: Read>(r: &mut R) -> Result<Checkpoint> {
    if &read_array::<8, _>(r)? != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(read_array(r)?);
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let tag_len = read_array::<1, _>(r)?[0] as usize;
    let tag = String::from_utf8(read_bytes(r, tag_len)?).map_err(|_| bad("bad arch tag"))?;
    let kind: ArchKind = tag.parse().map_err(|_| bad(format!("unknown arch `{tag}`")))?;
    let dropout = f64::from_le_bytes(read_array(r)?);
    let meta_len = u64::from_le_bytes(read_array(r)?) as usize;
    let meta = String::from_utf8(read_bytes(r, meta_len)?).map_err(|_| bad("metadata is not UTF-8"))?;

    let count = u32::from_le_bytes(read_array(r)?) as usize;
    let mut tensors = HashMap::new();
    for _ in 0..count {
        let name_len = u16::from_le_bytes(read_array(r)?) as usize;
        let name = String::from_utf8(read_bytes(r, name_len)?).map_err(|_| bad("bad tensor name"))?;
        let rank = read_array::<1, _>(r)?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u64::from_le_bytes(read_array(r)?) as usize);
        }
        let len: usize = shape.iter().product();
        let raw = read_bytes(r, len * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        let t = Tensor::new(&shape, data).map_err(|e| bad(format!("tensor `{name}`: {e}")))?;
        tensors.insert(name, t);
    }

    let mut take = |name: &str| tensors.remove(name).ok_or_else(|| bad(format!("missing tensor `{name}`")));
    let params = match kind {
        ArchKind::Fnn => {
            let layers = count / 2;
            let mut weights = Vec::new();
            let mut biases = Vec::new();
            for l in 1..=layers {
                weights.push(take(&format!("w{l}"))?);
                biases.push(take(&format!("b{l}"))?);
            }
            ModelParams::Fnn(FnnParams::from_layers(weights, biases)?)
        }
        ArchKind::Cnn => ModelParams::Cnn(CnnParams {
            filters: take("filters")?,
            conv_b: take("conv_b")?,
            fc_w: take("fc_w")?,
            fc_b: take("fc_b")?,
            out_w: take("out_w")?,
            out_b: take("out_b")?,
            dropout,
            embedding: take("embedding").ok(),
        }),
        ArchKind::Rnn => ModelParams::Rnn(RnnParams {
            w_in: take("w_in")?,
            w_rec: take("w_rec")?,
            b: take("b")?,
            out_w: take("out_w")?,
            out_b: take("out_b")?,
            dropout,
            embedding: take("embedding").ok(),
        }),
        ArchKind::Lstm => {
            let mut gate = |p: &str| -> Result<[Tensor; 4]> {
                Ok([
                    take(&format!("{p}_i"))?,
                    take(&format!("{p}_f"))?,
                    take(&format!("{p}_o"))?,
                    take(&format!("{p}_u"))?,
                ])
            };
            let (w, u, b) = (gate("w")?, gate("u")?, gate("b")?);
            ModelParams::Lstm(LstmParams {
                w,
                u,
                b,
                out_w: take("out_w")?,
                out_b: take("out_b")?,
                dropout,
                embedding: take("embedding").ok(),
            })
        }
    };
    Ok(Checkpoint { params, meta })
}
