//! The `KDMC` checkpoint container: named f64 tensors plus a key=value trailer.
//!
//! ```text
//! "KDMC" | version: u8 = 1 | tensor count: u32
//! per tensor: name length u16 | name UTF-8 | rank u8 | rank × dim u32 | data f64 LE
//! trailer length: u32 | trailer: UTF-8 "key=value\n" lines
//! ```

use std::path::Path;

use super::container::{check_header, decode_trailer, encode_trailer, Reader};
use crate::error::{shape_err, Error, FormatError, Result};
use crate::ndmath::{Dense, Matrix, Mlp};

const MAGIC: [u8; 4] = *b"KDMC";
const VERSION: u8 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Named tensors plus string metadata.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<NamedTensor>,
    pub meta: Vec<(String, String)>,
}

impl Checkpoint {
    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) {
        self.tensors.push(NamedTensor {
            name: name.into(),
            shape,
            data,
        });
    }

    pub fn set_meta(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        let value = value.to_string();
        match self.meta.iter_mut().find(|(k, _)| *k == key) {
            Some(entry) => entry.1 = value,
            None => self.meta.push((key, value)),
        }
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Metadata value parsed as `T`, with a format error naming the key on failure.
    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self
            .meta(key)
            .ok_or_else(|| FormatError::Malformed(format!("checkpoint lacks {key}")))?;
        raw.parse()
            .map_err(|_| FormatError::Malformed(format!("checkpoint {key}={raw:?} is invalid")).into())
    }

    pub fn tensor(&self, name: &str) -> Result<&NamedTensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| FormatError::Malformed(format!("checkpoint lacks tensor {name}")).into())
    }

    pub fn matrix(&self, name: &str) -> Result<Matrix> {
        let t = self.tensor(name)?;
        match t.shape[..] {
            [r, c] => Matrix::from_vec(r, c, t.data.clone()),
            _ => Err(shape_err("tensor rank", format!("{name}: 2"), t.shape.len())),
        }
    }

    pub fn vector(&self, name: &str) -> Result<Vec<f64>> {
        let t = self.tensor(name)?;
        if t.shape.len() != 1 {
            return Err(shape_err("tensor rank", format!("{name}: 1"), t.shape.len()));
        }
        Ok(t.data.clone())
    }

    pub fn push_matrix(&mut self, name: impl Into<String>, m: &Matrix) {
        self.push(name, vec![m.rows(), m.cols()], m.data().to_vec());
    }

    pub fn push_vector(&mut self, name: impl Into<String>, v: &[f64]) {
        self.push(name, vec![v.len()], v.to_vec());
    }

    /// Stores every layer of `net` under `prefix`.
    pub fn push_mlp(&mut self, prefix: &str, net: &Mlp) {
        self.set_meta(format!("{prefix}.layers"), net.layers().len());
        self.set_meta(format!("{prefix}.embed_dim"), net.embed_dim());
        for (l, layer) in net.layers().iter().enumerate() {
            self.push_matrix(format!("{prefix}.layers.{l}.weight"), &layer.weight);
            self.push_vector(format!("{prefix}.layers.{l}.bias"), &layer.bias);
        }
    }

    pub fn mlp(&self, prefix: &str) -> Result<Mlp> {
        let n: usize = self.meta_parse(&format!("{prefix}.layers"))?;
        let embed: usize = self.meta_parse(&format!("{prefix}.embed_dim"))?;
        let layers = (0..n)
            .map(|l| {
                Ok(Dense {
                    weight: self.matrix(&format!("{prefix}.layers.{l}.weight"))?,
                    bias: self.vector(&format!("{prefix}.layers.{l}.bias"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Mlp::from_layers(layers, embed)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend(MAGIC);
        out.push(VERSION);
        out.extend((self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            let numel: usize = t.shape.iter().product();
            if numel != t.data.len() {
                return Err(shape_err("tensor data length", format!("{}: {numel}", t.name), t.data.len()));
            }
            let name = t.name.as_bytes();
            let len = u16::try_from(name.len())
                .map_err(|_| FormatError::Malformed(format!("tensor name {} too long", t.name)))?;
            let rank = u8::try_from(t.shape.len())
                .map_err(|_| FormatError::Malformed(format!("tensor {} rank too high", t.name)))?;
            out.extend(len.to_le_bytes());
            out.extend(name);
            out.push(rank);
            for &d in &t.shape {
                let d = u32::try_from(d)
                    .map_err(|_| FormatError::Malformed(format!("tensor {} too large", t.name)))?;
                out.extend(d.to_le_bytes());
            }
            for v in &t.data {
                out.extend(v.to_le_bytes());
            }
        }
        encode_trailer(&mut out, &self.meta);
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Checkpoint, FormatError> {
        let mut r = Reader::new(bytes);
        check_header(&mut r, MAGIC)?;
        let count = r.u32("tensor count")? as usize;
        let mut tensors = Vec::new();
        let mut scalars = 0usize;
        for _ in 0..count {
            let len = r.u16("tensor name length")? as usize;
            let name = std::str::from_utf8(r.take(len, "tensor name")?)
                .map_err(|_| FormatError::Malformed("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = r.u8("tensor rank")? as usize;
            let shape = (0..rank)
                .map(|_| r.u32("tensor shape").map(|d| d as usize))
                .collect::<Result<Vec<_>, _>>()?;
            let numel: usize = shape.iter().product();
            if r.remaining() / 8 < numel {
                return Err(FormatError::Truncated("tensor data"));
            }
            let mut data = Vec::with_capacity(numel);
            for _ in 0..numel {
                let v = r.f64("tensor data")?;
                if !v.is_finite() {
                    return Err(FormatError::NonFinite(scalars));
                }
                data.push(v);
                scalars += 1;
            }
            tensors.push(NamedTensor { name, shape, data });
        }
        let meta = decode_trailer(&mut r)?;
        r.finish()?;
        Ok(Checkpoint { tensors, meta })
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let bytes = ckpt.encode()?;
    std::fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(Checkpoint::decode(&bytes)?)
}
