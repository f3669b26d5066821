//! The `KDMP` pair container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "KDMP" | version: u8 = 1 | flags: u8 (bit 0 = labelled) | count: u32
//! count × ( x_T.x f32 | x_T.y f32 | x_0.x f32 | x_0.y f32 [| label u16, 0xFFFF = outside] )
//! trailer length: u32 | trailer: UTF-8 "key=value\n" lines
//! ```
//!
//! Coordinates are narrowed from f64 to f32 on save. A set that has been saved once
//! round-trips bit-exactly from then on.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use super::{NoisePair, PairMeta, PairSet};
use crate::error::{Error, FormatError, Result};
use crate::teacher::CheckerboardSpec;

const MAGIC: [u8; 4] = *b"KDMP";
const VERSION: u8 = 1;
const FLAG_LABELLED: u8 = 1;
const OUTSIDE: u16 = 0xFFFF;

/// Little-endian cursor over a byte buffer.
pub(super) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(super) fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub(super) fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], FormatError> {
        if self.buf.len() - self.pos < n {
            return Err(FormatError::Truncated(what));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(super) fn u8(&mut self, what: &'static str) -> Result<u8, FormatError> {
        Ok(self.take(1, what)?[0])
    }

    pub(super) fn u16(&mut self, what: &'static str) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    pub(super) fn u32(&mut self, what: &'static str) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub(super) fn f32(&mut self, what: &'static str) -> Result<f32, FormatError> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub(super) fn f64(&mut self, what: &'static str) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub(super) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub(super) fn finish(&self) -> Result<(), FormatError> {
        if self.pos != self.buf.len() {
            return Err(FormatError::Malformed(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub(super) fn check_header(r: &mut Reader<'_>, magic: [u8; 4]) -> Result<(), FormatError> {
    let found: [u8; 4] = r.take(4, "magic")?.try_into().unwrap();
    if found != magic {
        return Err(FormatError::BadMagic {
            expected: magic,
            found,
        });
    }
    let version = r.u8("version")?;
    if version != VERSION {
        return Err(FormatError::Version(version));
    }
    Ok(())
}

pub(super) fn encode_trailer(out: &mut Vec<u8>, entries: &[(String, String)]) {
    let text: String = entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    out.extend((text.len() as u32).to_le_bytes());
    out.extend(text.as_bytes());
}

pub(super) fn decode_trailer(r: &mut Reader<'_>) -> Result<Vec<(String, String)>, FormatError> {
    let len = r.u32("trailer length")? as usize;
    let bytes = r.take(len, "trailer")?;
    let text = std::str::from_utf8(bytes).map_err(|_| FormatError::Malformed("trailer is not UTF-8".into()))?;
    text.lines()
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| FormatError::Malformed(format!("trailer line {l:?} has no '='")))
        })
        .collect()
}

fn narrow(v: f64, index: usize) -> Result<f32, FormatError> {
    let n = v as f32;
    if n.is_finite() {
        Ok(n)
    } else {
        Err(FormatError::NonFinite(index))
    }
}

/// Serialises a pair set into `KDMP` bytes.
pub fn encode_pairs(set: &PairSet) -> Result<Vec<u8>> {
    let labelled = set.meta.conditional;
    let count = u32::try_from(set.pairs.len())
        .map_err(|_| FormatError::Malformed("more than u32::MAX pairs".into()))?;
    let mut out = Vec::with_capacity(10 + set.pairs.len() * 18 + 128);
    out.extend(MAGIC);
    out.push(VERSION);
    out.push(if labelled { FLAG_LABELLED } else { 0 });
    out.extend(count.to_le_bytes());
    for (i, p) in set.pairs.iter().enumerate() {
        for v in p.x_t.iter().chain(&p.x_0) {
            out.extend(narrow(*v, i)?.to_le_bytes());
        }
        if labelled {
            let code = match p.label {
                Some(l) if l < OUTSIDE as usize => l as u16,
                Some(l) => return Err(FormatError::Malformed(format!("label {l} does not fit in u16")).into()),
                None => OUTSIDE,
            };
            out.extend(code.to_le_bytes());
        }
    }
    let m = &set.meta;
    let entries = [
        ("teacher_kind", m.teacher_kind.to_string()),
        ("nfe", m.nfe.to_string()),
        ("seed", m.seed.to_string()),
        ("grid", m.data_spec.grid.to_string()),
        ("extent", m.data_spec.extent.to_string()),
        ("conditional", m.conditional.to_string()),
    ]
    .map(|(k, v)| (k.to_string(), v));
    encode_trailer(&mut out, &entries);
    Ok(out)
}

fn parse_meta(entries: Vec<(String, String)>, labelled: bool) -> Result<PairMeta, FormatError> {
    let map: BTreeMap<String, String> = entries.into_iter().collect();
    fn field<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T, FormatError> {
        let raw = map
            .get(key)
            .ok_or_else(|| FormatError::Malformed(format!("trailer lacks {key}")))?;
        raw.parse()
            .map_err(|_| FormatError::Malformed(format!("trailer {key}={raw:?} is invalid")))
    }
    let conditional: bool = field(&map, "conditional")?;
    if conditional != labelled {
        return Err(FormatError::Malformed("label flag disagrees with trailer".into()));
    }
    let kind: String = field(&map, "teacher_kind")?;
    Ok(PairMeta {
        teacher_kind: kind
            .parse()
            .map_err(|_| FormatError::Malformed(format!("unknown teacher kind {kind:?}")))?,
        nfe: field(&map, "nfe")?,
        seed: field(&map, "seed")?,
        data_spec: CheckerboardSpec {
            grid: field(&map, "grid")?,
            extent: field(&map, "extent")?,
        },
        conditional,
    })
}

/// Parses `KDMP` bytes. Nothing is returned unless the whole buffer is valid.
pub fn decode_pairs(bytes: &[u8]) -> Result<PairSet, FormatError> {
    let mut r = Reader::new(bytes);
    check_header(&mut r, MAGIC)?;
    let flags = r.u8("flags")?;
    if flags & !FLAG_LABELLED != 0 {
        return Err(FormatError::Malformed(format!("unknown flags {flags:#04x}")));
    }
    let labelled = flags & FLAG_LABELLED != 0;
    let count = r.u32("count")? as usize;
    let record = if labelled { 18 } else { 16 };
    if r.remaining() / record < count {
        return Err(FormatError::Truncated("pair records"));
    }
    let mut pairs = Vec::with_capacity(count);
    for i in 0..count {
        let mut v = [0.0f64; 4];
        for slot in &mut v {
            let x = r.f32("pair record")?;
            if !x.is_finite() {
                return Err(FormatError::NonFinite(i));
            }
            *slot = f64::from(x);
        }
        let (label, outside) = if labelled {
            match r.u16("label")? {
                OUTSIDE => (None, true),
                l => (Some(l as usize), false),
            }
        } else {
            (None, false)
        };
        pairs.push(NoisePair {
            x_t: [v[0], v[1]],
            x_0: [v[2], v[3]],
            label,
            outside,
        });
    }
    let meta = parse_meta(decode_trailer(&mut r)?, labelled)?;
    r.finish()?;
    Ok(PairSet { pairs, meta })
}

pub fn save_pairs(set: &PairSet, path: &Path) -> Result<()> {
    let bytes = encode_pairs(set)?;
    std::fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_pairs(path: &Path) -> Result<PairSet> {
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(decode_pairs(&bytes)?)
}

/// CSV with header `xT_x,xT_y,x0_x,x0_y,label`; the label column is empty when absent.
pub fn write_pairs_csv<W: Write>(set: &PairSet, mut out: W) -> std::io::Result<()> {
    writeln!(out, "xT_x,xT_y,x0_x,x0_y,label")?;
    for p in &set.pairs {
        let label = p.label.map(|l| l.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{},{},{}", p.x_t[0], p.x_t[1], p.x_0[0], p.x_0[1], label)?;
    }
    Ok(())
}
