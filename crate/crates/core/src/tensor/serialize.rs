//! Named-tensor container file.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes   b"DFTNSR01"
//! header_len   u64       byte length of the JSON header
//! header       UTF-8 JSON {"format_version":1,"tensors":[{"name","shape","offset","count"}...]}
//! payload      f32 LE    tensors back to back; `offset` counts f32 values from payload start
//! ```
//!
//! Names are '.'-separated hierarchical paths. Tensors are written in
//! lexicographic name order so identical contents give identical bytes.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{Real, Result, Tensor, TensorError};

pub const CONTAINER_MAGIC: &[u8; 8] = b"DFTNSR01";
pub const CONTAINER_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    tensors: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    count: usize,
}

fn format_err(msg: impl Into<String>) -> TensorError {
    TensorError::Format(msg.into())
}

pub fn write_container<T: Real, W: Write>(out: &mut W, tensors: &BTreeMap<String, Tensor<T>>) -> Result<()> {
    let mut entries = Vec::with_capacity(tensors.len());
    let mut offset = 0;
    for (name, t) in tensors {
        entries.push(Entry { name: name.clone(), shape: t.shape().to_vec(), offset, count: t.len() });
        offset += t.len();
    }
    let header = serde_json::to_vec(&Header { format_version: CONTAINER_FORMAT_VERSION, tensors: entries })
        .map_err(|e| format_err(e.to_string()))?;
    out.write_all(CONTAINER_MAGIC)?;
    out.write_all(&(header.len() as u64).to_le_bytes())?;
    out.write_all(&header)?;
    let mut payload = Vec::with_capacity(offset * 4);
    for t in tensors.values() {
        for v in t.data() {
            payload.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    out.write_all(&payload)?;
    Ok(())
}

pub fn read_container<T: Real, R: Read>(input: &mut R) -> Result<BTreeMap<String, Tensor<T>>> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != CONTAINER_MAGIC {
        return Err(format_err("bad magic, not a tensor container"));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    let mut header = vec![0u8; len];
    input.read_exact(&mut header)?;
    let header: Header = serde_json::from_slice(&header).map_err(|e| format_err(format!("header: {e}")))?;
    if header.format_version != CONTAINER_FORMAT_VERSION {
        return Err(format_err(format!("unsupported format version {}", header.format_version)));
    }
    let mut payload = Vec::new();
    input.read_to_end(&mut payload)?;
    let total: usize = header.tensors.iter().map(|e| e.count).sum();
    if payload.len() != total * 4 {
        return Err(format_err(format!("payload has {} bytes, header describes {}", payload.len(), total * 4)));
    }
    let mut out = BTreeMap::new();
    for e in header.tensors {
        if e.offset + e.count > total {
            return Err(format_err(format!("tensor {} extends past the payload", e.name)));
        }
        let data = payload[e.offset * 4..(e.offset + e.count) * 4]
            .chunks_exact(4)
            .map(|b| T::from_f64(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
            .collect();
        let t = Tensor::new(e.shape, data).map_err(|err| format_err(format!("tensor {}: {err}", e.name)))?;
        if out.insert(e.name.clone(), t).is_some() {
            return Err(format_err(format!("duplicate tensor name {}", e.name)));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut m = BTreeMap::new();
        m.insert("enc0.conv.weight".to_string(), Tensor::<f32>::from_fn([2, 1, 3, 3], |i| i as f32 * 0.1 - 0.4));
        m.insert("head.bias".to_string(), Tensor::<f32>::new([1], vec![f32::MIN_POSITIVE]).unwrap());
        let mut buf = Vec::new();
        write_container(&mut buf, &m).unwrap();
        assert_eq!(&buf[..8], CONTAINER_MAGIC);
        let back: BTreeMap<String, Tensor<f32>> = read_container(&mut buf.as_slice()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let mut m = BTreeMap::new();
        m.insert("w".to_string(), Tensor::<f32>::zeros([4]));
        let mut buf = Vec::new();
        write_container(&mut buf, &m).unwrap();
        buf.truncate(buf.len() - 2);
        assert!(read_container::<f32, _>(&mut buf.as_slice()).is_err());
    }
}
