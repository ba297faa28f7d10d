//! Binary checkpoint container.
//!
//! Layout: `"MNAVCKPT"`, `u32` version, `u32` record count, then per record a
//! `u16` name length, the UTF-8 name, `u8` rank, `u32` dims and raw
//! little-endian `f32` data.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use super::error::{NnError, Result};
use super::network::NetworkParams;
use super::optim::AdamState;
use super::spec::NetworkSpec;
use super::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"MNAVCKPT";
pub const VERSION: u32 = 1;

const SPEC_RECORD: &str = "net.spec";
const ADAM_STEP: &str = "adam.step";
const ADAM_HYPER: &str = "adam.hyper";

/// A decoded checkpoint: network, optimizer state and any extra records.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: NetworkParams,
    pub adam: AdamState,
    pub extra: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn extra(&self, name: &str) -> Option<&Tensor> {
        self.extra.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

pub fn encode_records(records: &[(String, Tensor)]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for (name, t) in records {
        let bytes = name.as_bytes();
        let len = u16::try_from(bytes.len()).map_err(|_| NnError::Malformed(format!("record name too long: {name}")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(bytes);
        let rank = u8::try_from(t.shape().len()).map_err(|_| NnError::Malformed(format!("rank too large: {name}")))?;
        out.push(rank);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(NnError::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(NnError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode_records(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(NnError::NotACheckpoint);
    }
    let mut r = Reader {
        buf: bytes,
        pos: MAGIC.len(),
    };
    let version = r.u32()?;
    if version != VERSION {
        return Err(NnError::UnsupportedVersion(version));
    }
    let count = r.u32()? as usize;
    let mut records = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| NnError::Malformed("record name is not UTF-8".into()))?
            .to_string();
        let rank = r.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(4).ok_or(NnError::Truncated)?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        records.push((name, Tensor::new(shape, data)?));
    }
    if r.pos != bytes.len() {
        return Err(NnError::Malformed("trailing bytes after last record".into()));
    }
    Ok(records)
}

fn spec_record(spec: &NetworkSpec) -> Tensor {
    let rows = spec.encode();
    let data = rows.iter().flatten().map(|&v| v as f32).collect();
    Tensor::new(vec![rows.len(), 4], data).expect("consistent shape")
}

pub fn checkpoint_records(params: &NetworkParams, adam: &AdamState, extra: &[(String, Tensor)]) -> Vec<(String, Tensor)> {
    let mut records = vec![(SPEC_RECORD.to_string(), spec_record(params.spec()))];
    for (name, t) in params.names().iter().zip(params.tensors()) {
        records.push((name.clone(), t.clone()));
    }
    for (name, t) in params.names().iter().zip(&adam.m) {
        records.push((format!("adam.m.{name}"), t.clone()));
    }
    for (name, t) in params.names().iter().zip(&adam.v) {
        records.push((format!("adam.v.{name}"), t.clone()));
    }
    records.push((ADAM_STEP.to_string(), Tensor::scalar(adam.step as f32)));
    records.push((
        ADAM_HYPER.to_string(),
        Tensor::from_vec(vec![adam.lr, adam.beta1, adam.beta2, adam.epsilon]),
    ));
    records.extend(extra.iter().cloned());
    records
}

pub fn save_checkpoint_with(
    path: &Path,
    params: &NetworkParams,
    adam: &AdamState,
    extra: &[(String, Tensor)],
) -> Result<()> {
    let bytes = encode_records(&checkpoint_records(params, adam, extra))?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    f.flush()?;
    Ok(())
}

pub fn save_checkpoint(path: &Path, params: &NetworkParams, adam: &AdamState) -> Result<()> {
    save_checkpoint_with(path, params, adam, &[])
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut records = decode_records(bytes)?;
    let mut take = |name: &str| -> Result<Tensor> {
        let idx = records
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| NnError::Malformed(format!("missing record {name}")))?;
        Ok(records.remove(idx).1)
    };
    let spec_t = take(SPEC_RECORD)?;
    if spec_t.shape().len() != 2 || spec_t.shape()[1] != 4 {
        return Err(NnError::Malformed("bad spec record".into()));
    }
    let rows: Vec<[u32; 4]> = spec_t
        .data()
        .chunks_exact(4)
        .map(|c| [c[0] as u32, c[1] as u32, c[2] as u32, c[3] as u32])
        .collect();
    let spec = NetworkSpec::decode(&rows)?;
    let n_tensors = spec.param_shapes()?.len() * 2;
    let names: Vec<String> = spec
        .param_shapes()?
        .iter()
        .flat_map(|(l, _, _)| [format!("layer{l}.weight"), format!("layer{l}.bias")])
        .collect();
    debug_assert_eq!(names.len(), n_tensors);
    let tensors = names.iter().map(|n| take(n)).collect::<Result<Vec<_>>>()?;
    let params = NetworkParams::from_tensors(spec, tensors)?;
    let m = names.iter().map(|n| take(&format!("adam.m.{n}"))).collect::<Result<Vec<_>>>()?;
    let v = names.iter().map(|n| take(&format!("adam.v.{n}"))).collect::<Result<Vec<_>>>()?;
    for (p, (a, b)) in params.tensors().iter().zip(m.iter().zip(&v)) {
        if a.shape() != p.shape() || b.shape() != p.shape() {
            return Err(NnError::Malformed("adam moment shape differs from parameter".into()));
        }
    }
    let step = take(ADAM_STEP)?;
    let hyper = take(ADAM_HYPER)?;
    if step.len() != 1 || hyper.len() != 4 {
        return Err(NnError::Malformed("bad adam scalar records".into()));
    }
    let h = hyper.data();
    let adam = AdamState {
        m,
        v,
        step: step.data()[0] as u64,
        lr: h[0],
        beta1: h[1],
        beta2: h[2],
        epsilon: h[3],
    };
    Ok(Checkpoint {
        params,
        adam,
        extra: records,
    })
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => NnError::Truncated,
        _ => NnError::Io(e),
    })?;
    parse_checkpoint(&bytes)
}

pub fn load_checkpoint(path: &Path) -> Result<(NetworkParams, AdamState)> {
    let ck = read_checkpoint(path)?;
    Ok((ck.params, ck.adam))
}

/// Stores a UTF-8 string as a rank-1 record of byte values.
pub fn text_record(name: &str, text: &str) -> (String, Tensor) {
    (
        name.to_string(),
        Tensor::from_vec(text.bytes().map(|b| b as f32).collect()),
    )
}

pub fn record_text(t: &Tensor) -> Result<String> {
    let bytes: Vec<u8> = t
        .data()
        .iter()
        .map(|&v| {
            if (0.0..=255.0).contains(&v) && v.fract() == 0.0 {
                Ok(v as u8)
            } else {
                Err(NnError::Malformed("text record holds a non-byte value".into()))
            }
        })
        .collect::<Result<_>>()?;
    String::from_utf8(bytes).map_err(|_| NnError::Malformed("text record is not UTF-8".into()))
}
