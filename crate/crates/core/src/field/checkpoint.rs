//! Checkpoint layout: a text manifest terminated by `end\n`, followed by one
//! f32 NTF tensor per listed entry in manifest order.
//!
//! ```text
//! instfield-checkpoint 1
//! mode mlp
//! channels 8
//! hidden 32
//! window 8
//! tensor layer0.weight 32,9
//! ...
//! end
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::embedder::{EmbedderMode, EmbedderParams, MlpParams};
use super::FeatureField;
use crate::error::{Error, Result};
use crate::format::Tensor;

const MAGIC: &str = "instfield-checkpoint 1";

pub fn encode_checkpoint(params: &EmbedderParams) -> Vec<u8> {
    let mut head = String::new();
    let _ = writeln!(head, "{MAGIC}");
    let _ = writeln!(head, "mode {}", params.mode().name());
    let _ = writeln!(head, "channels {}", params.channels());
    if let EmbedderParams::Mlp(m) = params {
        let _ = writeln!(head, "hidden {}", m.hidden);
        let _ = writeln!(head, "window {}", m.window);
    }
    let tensors = params.tensors();
    for (name, dims, _) in &tensors {
        let dims: Vec<String> = dims.iter().map(usize::to_string).collect();
        let _ = writeln!(head, "tensor {name} {}", dims.join(","));
    }
    head.push_str("end\n");
    let mut out = head.into_bytes();
    for (_, dims, values) in tensors {
        let t = Tensor::f32(dims, values.iter().map(|&x| x as f32).collect()).expect("dims match values");
        out.extend(t.encode());
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<EmbedderParams> {
    let end = bytes
        .windows(5)
        .position(|w| w == b"\nend\n")
        .ok_or_else(|| Error::format(bytes.len(), "checkpoint manifest has no end line"))?;
    let head = std::str::from_utf8(&bytes[..end + 1]).map_err(|e| Error::format(e.valid_up_to(), "manifest is not UTF-8"))?;
    let mut lines = head.lines();
    if lines.next() != Some(MAGIC) {
        return Err(Error::format(0, "not a checkpoint"));
    }
    let mut mode = None;
    let (mut channels, mut hidden, mut window) = (0, 0, 0);
    let mut entries: Vec<(String, Vec<usize>)> = Vec::new();
    let mut offset = MAGIC.len() + 1;
    for line in lines {
        let at = offset;
        offset += line.len() + 1;
        let bad = || Error::format(at, format!("bad manifest line '{line}'"));
        let mut parts = line.split_whitespace();
        match (parts.next(), parts.next(), parts.next()) {
            (Some("mode"), Some(m), None) => mode = Some(EmbedderMode::parse(m).map_err(|_| bad())?),
            (Some("channels"), Some(v), None) => channels = v.parse().map_err(|_| bad())?,
            (Some("hidden"), Some(v), None) => hidden = v.parse().map_err(|_| bad())?,
            (Some("window"), Some(v), None) => window = v.parse().map_err(|_| bad())?,
            (Some("tensor"), Some(name), Some(dims)) => {
                let dims = dims.split(',').map(|d| d.parse::<usize>()).collect::<Result<Vec<_>, _>>().map_err(|_| bad())?;
                entries.push((name.to_string(), dims));
            }
            _ => return Err(bad()),
        }
    }
    let mode = mode.ok_or_else(|| Error::format(0, "checkpoint has no mode"))?;

    let mut pos = end + 5;
    let mut values = Vec::with_capacity(entries.len());
    for (name, dims) in &entries {
        let (t, used) = Tensor::decode_prefix(&bytes[pos..]).map_err(|e| match e {
            Error::Format { offset, msg } => Error::format(pos + offset, format!("{name}: {msg}")),
            other => other,
        })?;
        if t.dims() != dims.as_slice() {
            return Err(Error::format(pos, format!("{name}: manifest dims {dims:?} vs tensor {:?}", t.dims())));
        }
        pos += used;
        values.push(t.into_f32()?.into_iter().map(f64::from).collect::<Vec<f64>>());
    }
    if pos != bytes.len() {
        return Err(Error::format(pos, "trailing bytes after last tensor"));
    }

    let mut params = match mode {
        EmbedderMode::FreeTable => {
            let dims = entries.first().map(|e| e.1.clone()).unwrap_or_default();
            if dims.len() != 4 {
                return Err(Error::format(0, "table must be rank 4"));
            }
            EmbedderParams::FreeTable(FeatureField::zeros(dims[0], dims[1], dims[2], dims[3]))
        }
        EmbedderMode::Mlp => EmbedderParams::Mlp(MlpParams::zeros(channels, hidden, window)),
    };
    let expected: Vec<(String, Vec<usize>)> = params.tensors().into_iter().map(|(n, d, _)| (n, d)).collect();
    if expected != entries {
        return Err(Error::format(0, "tensor list does not match the declared architecture"));
    }
    for (dst, src) in params.tensors_mut().into_iter().zip(values) {
        dst.copy_from_slice(&src);
    }
    Ok(params)
}

pub fn write_checkpoint(path: &Path, params: &EmbedderParams) -> Result<()> {
    fs::write(path, encode_checkpoint(params)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<EmbedderParams> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rounded(p: &EmbedderParams) -> EmbedderParams {
        let mut q = p.clone();
        for t in q.tensors_mut() {
            t.iter_mut().for_each(|x| *x = f64::from(*x as f32));
        }
        q
    }

    #[test]
    fn mlp_round_trip() {
        let p = EmbedderParams::Mlp(MlpParams::random(8, 16, 4, 2));
        let bytes = encode_checkpoint(&p);
        assert_eq!(decode_checkpoint(&bytes).unwrap(), rounded(&p));
    }

    #[test]
    fn table_round_trip() {
        let mut f = FeatureField::zeros(2, 3, 4, 5);
        f.values_mut().iter_mut().enumerate().for_each(|(i, x)| *x = i as f64 * 0.25);
        let p = EmbedderParams::FreeTable(f);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");
        write_checkpoint(&path, &p).unwrap();
        assert_eq!(read_checkpoint(&path).unwrap(), p);
    }

    #[test]
    fn truncation_and_garbage() {
        let p = EmbedderParams::Mlp(MlpParams::random(4, 4, 4, 0));
        let bytes = encode_checkpoint(&p);
        assert!(matches!(decode_checkpoint(&bytes[..bytes.len() - 3]), Err(Error::Format { .. })));
        assert!(matches!(decode_checkpoint(b"hello\nend\n"), Err(Error::Format { offset: 0, .. })));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_checkpoint(&extra).is_err());
    }
}
