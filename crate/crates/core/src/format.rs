//! On-disk encodings: NTF tensors, 16-bit PGM label maps and PPM color maps.
//!
//! NTF layout (all integers little-endian):
//!
//! ```text
//! "NTF1" | dtype u8 (1 = f32, 2 = i32) | rank u8 | rank × u64 dims | payload
//! ```
//!
//! The payload is the row-major element array. Decoders report the byte
//! offset at which a malformed stream was detected.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::LabelMap;

pub const NTF_MAGIC: &[u8; 4] = b"NTF1";

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    I32(Vec<i32>),
}

impl TensorData {
    fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::I32(v) => v.len(),
        }
    }

    fn code(&self) -> u8 {
        match self {
            TensorData::F32(_) => 1,
            TensorData::I32(_) => 2,
        }
    }
}

/// A dense tensor as stored in an NTF stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: TensorData,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: TensorData) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if dims.len() > u8::MAX as usize {
            return Err(Error::Shape(format!("rank {} exceeds 255", dims.len())));
        }
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "dims {dims:?} need {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn f32(dims: Vec<usize>, values: Vec<f32>) -> Result<Self> {
        Self::new(dims, TensorData::F32(values))
    }

    pub fn i32(dims: Vec<usize>, values: Vec<i32>) -> Result<Self> {
        Self::new(dims, TensorData::I32(values))
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn into_f32(self) -> Result<Vec<f32>> {
        match self.data {
            TensorData::F32(v) => Ok(v),
            TensorData::I32(_) => Err(Error::format(4, "expected f32 tensor, found i32")),
        }
    }

    pub fn into_i32(self) -> Result<Vec<i32>> {
        match self.data {
            TensorData::I32(v) => Ok(v),
            TensorData::F32(_) => Err(Error::format(4, "expected i32 tensor, found f32")),
        }
    }

    /// Checks the dims against an expected shape.
    pub fn expect_dims(&self, expected: &[usize]) -> Result<()> {
        if self.dims != expected {
            return Err(Error::Shape(format!(
                "expected tensor dims {expected:?}, found {:?}",
                self.dims
            )));
        }
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(6 + 8 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(NTF_MAGIC);
        out.push(self.data.code());
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        match &self.data {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::I32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    /// Decodes one tensor from the front of `bytes`, returning it and the
    /// number of bytes consumed.
    pub fn decode_prefix(bytes: &[u8]) -> Result<(Self, usize)> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != NTF_MAGIC {
            return Err(Error::format(0, format!("bad magic {magic:?}")));
        }
        let code_at = r.pos;
        let code = r.take(1, "dtype")?[0];
        let rank = r.take(1, "rank")?[0] as usize;
        let mut dims = Vec::with_capacity(rank);
        let mut count: usize = 1;
        for i in 0..rank {
            let at = r.pos;
            let d = u64::from_le_bytes(r.take(8, "dimension")?.try_into().unwrap());
            let d = usize::try_from(d)
                .map_err(|_| Error::format(at, format!("dimension {i} too large")))?;
            count = count
                .checked_mul(d)
                .ok_or_else(|| Error::format(at, "element count overflows"))?;
            dims.push(d);
        }
        let payload_len = count
            .checked_mul(4)
            .ok_or_else(|| Error::format(r.pos, "payload size overflows"))?;
        let payload = r.take(payload_len, "payload")?;
        let data = match code {
            1 => TensorData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            2 => TensorData::I32(
                payload
                    .chunks_exact(4)
                    .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            other => return Err(Error::format(code_at, format!("unknown dtype code {other}"))),
        };
        Ok((Self { dims, data }, r.pos))
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let (t, used) = Self::decode_prefix(bytes)?;
        if used != bytes.len() {
            return Err(Error::format(
                used,
                format!("{} trailing bytes after payload", bytes.len() - used),
            ));
        }
        Ok(t)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::format(
                self.bytes.len(),
                format!(
                    "truncated {what}: need {n} bytes at offset {}, stream has {}",
                    self.pos,
                    self.bytes.len()
                ),
            )),
        }
    }
}

/// Encodes a label map as binary PGM (`P5`, maxval 65535, big-endian samples).
pub fn encode_pgm16(labels: &LabelMap) -> Result<Vec<u8>> {
    let header = format!("P5\n{} {}\n65535\n", labels.width(), labels.height());
    let mut out = Vec::with_capacity(header.len() + 2 * labels.len());
    out.extend_from_slice(header.as_bytes());
    for &l in labels.as_slice() {
        let l = u16::try_from(l)
            .map_err(|_| Error::InvalidInput(format!("label {l} exceeds 16-bit PGM range")))?;
        out.extend_from_slice(&l.to_be_bytes());
    }
    Ok(out)
}

pub fn decode_pgm16(bytes: &[u8]) -> Result<LabelMap> {
    let mut pos = 0;
    let magic = pgm_token(bytes, &mut pos)?;
    if magic != "P5" {
        return Err(Error::format(0, format!("expected P5, found {magic:?}")));
    }
    let mut fields = [0usize; 3];
    for field in &mut fields {
        let at = pos;
        let tok = pgm_token(bytes, &mut pos)?;
        *field = tok
            .parse()
            .map_err(|_| Error::format(at, format!("bad header number {tok:?}")))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 65535 {
        return Err(Error::format(pos, format!("expected maxval 65535, found {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let need = width * height * 2;
    if bytes.len() < pos + need {
        return Err(Error::format(
            bytes.len(),
            format!("truncated raster: need {need} bytes at offset {pos}"),
        ));
    }
    let data = bytes[pos..pos + need]
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]) as u32)
        .collect();
    LabelMap::from_vec(width, height, data)
}

fn pgm_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while let Some(&c) = bytes.get(*pos) {
                    *pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            }
            Some(c) if c.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => return Err(Error::format(*pos, "unexpected end of PGM header")),
        }
    }
    let start = *pos;
    while let Some(c) = bytes.get(*pos) {
        if c.is_ascii_whitespace() {
            break;
        }
        *pos += 1;
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

pub fn write_pgm16(path: &Path, labels: &LabelMap) -> Result<()> {
    fs::write(path, encode_pgm16(labels)?).map_err(|e| Error::io(path, e))
}

pub fn read_pgm16(path: &Path) -> Result<LabelMap> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm16(&bytes)
}

/// Encodes an RGB image with channels in `[0, 1]` as binary PPM (`P6`, 8-bit).
pub fn encode_ppm(width: usize, height: usize, rgb: &[[f64; 3]]) -> Result<Vec<u8>> {
    if rgb.len() != width * height {
        return Err(Error::Shape(format!(
            "PPM {width}x{height} needs {} pixels, got {}",
            width * height,
            rgb.len()
        )));
    }
    let header = format!("P6\n{width} {height}\n255\n");
    let mut out = Vec::with_capacity(header.len() + 3 * rgb.len());
    out.extend_from_slice(header.as_bytes());
    for px in rgb {
        for &c in px {
            out.push((c.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    Ok(out)
}
