//! Versioned model container.
//!
//! Layout: magic `DPMD`, version `u32`, total file length `u64`, element width `u8` (4 or 8), header
//! JSON (`u64` length + bytes: architecture and metadata), parameter count
//! `u32`, then per tensor its element count (`u64`) and little-endian values,
//! a prior block (`u8` flag; when set `dim`/`k` as `u32` and the mean,
//! components and eigenvalues as `f64`), and a trailing CRC-32.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::binio::{verify_crc, Reader, Writer};
use crate::error::{Error, Result};
use crate::nn::{ArchitectureSpec, NetKind, Network, Scalar, Tensor};
use crate::prior::PcaPrior;

pub const MODEL_MAGIC: [u8; 4] = *b"DPMD";
pub const MODEL_VERSION: u32 = 1;

/// Everything besides the weights needed to use a model on new frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    /// Fingerprint of the run configuration that produced the model.
    pub fingerprint: String,
    /// Edge of the crop cube the model was trained with, mm.
    pub cube_size: f64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    architecture: ArchitectureSpec,
    meta: ModelMeta,
}

#[derive(Debug, Clone)]
pub struct ModelFile<T> {
    pub net: Network<T>,
    pub prior: Option<PcaPrior>,
    pub meta: ModelMeta,
}

pub fn encode_model<T: Scalar>(net: &Network<T>, prior: Option<&PcaPrior>, meta: &ModelMeta) -> Result<Vec<u8>> {
    let mut w = Writer::new();
    w.bytes(&MODEL_MAGIC);
    w.u32(MODEL_VERSION);
    w.u64(0);
    w.u8(T::BYTES as u8);
    let header = serde_json::to_vec(&Header { architecture: net.spec().clone(), meta: meta.clone() })?;
    w.u64(header.len() as u64);
    w.bytes(&header);
    let params = net.params();
    w.u32(params.len() as u32);
    for p in params {
        w.u64(p.len() as u64);
        for &v in p.data() {
            v.write_le(&mut w.buf);
        }
    }
    match prior {
        None => w.u8(0),
        Some(pr) => {
            w.u8(1);
            w.u32(pr.dim() as u32);
            w.u32(pr.k() as u32);
            for &v in pr.mean.iter().chain(&pr.components).chain(&pr.eigenvalues) {
                w.f64(v);
            }
        }
    }
    let total = (w.buf.len() + 4) as u64;
    w.buf[8..16].copy_from_slice(&total.to_le_bytes());
    Ok(w.finish())
}

pub fn save_model<T: Scalar>(path: &Path, net: &Network<T>, prior: Option<&PcaPrior>, meta: &ModelMeta) -> Result<()> {
    fs::write(path, encode_model(net, prior, meta)?)?;
    Ok(())
}

/// Loads a model stored in either precision into `T`. With `expected` set,
/// a file holding a different network kind is an architecture mismatch.
pub fn load_model<T: Scalar>(path: &Path, expected: Option<NetKind>) -> Result<ModelFile<T>> {
    decode_model(&fs::read(path)?, expected)
}

pub fn decode_model<T: Scalar>(data: &[u8], expected: Option<NetKind>) -> Result<ModelFile<T>> {
    if data.len() < 4 + 4 + 8 {
        return Err(Error::Truncated(format!("model file has only {} bytes", data.len())));
    }
    if data[..4] != MODEL_MAGIC {
        return Err(Error::Format("not a model file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(data[4..8].try_into().expect("four bytes"));
    if version != MODEL_VERSION {
        return Err(Error::Version { found: version, expected: MODEL_VERSION });
    }
    let total = u64::from_le_bytes(data[8..16].try_into().expect("eight bytes"));
    if (data.len() as u64) < total {
        return Err(Error::Truncated(format!("model file has {} of {total} bytes", data.len())));
    }
    if data.len() as u64 > total {
        return Err(Error::Format(format!("{} trailing bytes after the model", data.len() as u64 - total)));
    }
    let body = verify_crc(data, "model file")?;
    let mut r = Reader::new(&body[16..], "model file");
    let width = r.u8()? as usize;
    let header_len = r.u64()? as usize;
    let header: Header = serde_json::from_slice(r.take(header_len)?)?;
    let kind = header.architecture.kind;
    if let Some(want) = expected {
        if want != kind {
            return Err(Error::ArchitectureMismatch { expected: want.name().into(), found: kind.name().into() });
        }
    }
    let mut net = Network::<T>::from_spec(header.architecture, 0)?;
    let count = r.u32()? as usize;
    let mut params = net.params_mut();
    if count != params.len() {
        return Err(Error::ArchitectureMismatch {
            expected: format!("{} parameter tensors", params.len()),
            found: format!("{count}"),
        });
    }
    for p in params.iter_mut() {
        let n = r.u64()? as usize;
        if n != p.len() {
            return Err(Error::ArchitectureMismatch { expected: format!("tensor of {} values", p.len()), found: format!("{n}") });
        }
        let raw = r.take(n * width)?;
        let values: Vec<T> = match width {
            4 if T::BYTES == 4 => raw.chunks_exact(4).map(T::read_le).collect(),
            8 if T::BYTES == 8 => raw.chunks_exact(8).map(T::read_le).collect(),
            4 => raw.chunks_exact(4).map(|b| T::of(f32::from_le_bytes(b.try_into().expect("4")) as f64)).collect(),
            8 => raw.chunks_exact(8).map(|b| T::of(f64::from_le_bytes(b.try_into().expect("8")))).collect(),
            other => return Err(Error::Format(format!("unsupported element width {other}"))),
        };
        **p = Tensor::from_vec(p.shape(), values)?;
    }
    let prior = match r.u8()? {
        0 => None,
        1 => {
            let (dim, k) = (r.u32()? as usize, r.u32()? as usize);
            let mean = r.f64s(dim)?;
            let components = r.f64s(k * dim)?;
            let eigenvalues = r.f64s(k)?;
            Some(PcaPrior { mean, components, eigenvalues })
        }
        f => return Err(Error::Format(format!("bad prior flag {f}"))),
    };
    if r.remaining() != 0 {
        return Err(Error::Format(format!("{} unexpected trailing bytes", r.remaining())));
    }
    Ok(ModelFile { net, prior, meta: header.meta })
}
