//! Checksummed on-disk formats: `LB2M` dense matrices and `LB2C`
//! compressed layers.
//!
//! Both containers are little-endian on every platform, open with a 4-byte
//! magic and a mandatory u16 version, and close with a CRC32 of every byte
//! that precedes it, so any single-byte corruption is detected. Decoding a
//! valid container and re-encoding it reproduces the input byte for byte.
//!
//! `LB2M` holds one dense matrix: dims as u64, a one-byte element-type tag
//! (f32 or f64), then the row-major payload.
//!
//! `LB2C` holds one compressed layer: dims, rank, rotation-method tag,
//! path count, and the seed and iteration count that produced it, then per
//! path the three scale vectors followed by the two packed sign factors,
//! each sign blob preceded by its u64 word count.
//!
//! Scale vectors are serialized as f32 while the library computes in f64.
//! The narrowing perturbs each scale by at most one part in 2^24, so a
//! reconstruction from disk differs slightly from the in-memory layer it
//! was encoded from; `lb2 compress` therefore reports the error of the
//! *stored* layer, which an offline recompute from the file reproduces
//! exactly. The accounting model in `lb2_core::budget` charges scales at
//! 16 bits; the format spends 32 per scale for simplicity, so files run a
//! little larger than the accounted bit total.

use std::fs;
use std::io;
use std::path::Path;

use lb2_core::factorize::TriScale;
use lb2_core::ndarray::{Array1, Array2};
use lb2_core::quantize::{
    CompressedLayer, Method, PackedBinaryFactor, Provenance, QuantizedPath,
};
use lb2_core::WeightMatrix;

pub const MATRIX_MAGIC: [u8; 4] = *b"LB2M";
pub const LAYER_MAGIC: [u8; 4] = *b"LB2C";
pub const FORMAT_VERSION: u16 = 1;

/// Element width of an `LB2M` payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixDtype {
    F32,
    F64,
}

impl MatrixDtype {
    fn tag(self) -> u8 {
        match self {
            MatrixDtype::F32 => 0,
            MatrixDtype::F64 => 1,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(MatrixDtype::F32),
            1 => Some(MatrixDtype::F64),
            _ => None,
        }
    }

    pub fn byte_width(self) -> usize {
        match self {
            MatrixDtype::F32 => 4,
            MatrixDtype::F64 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MatrixDtype::F32 => "f32",
            MatrixDtype::F64 => "f64",
        }
    }
}

impl std::str::FromStr for MatrixDtype {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "f32" => Ok(MatrixDtype::F32),
            "f64" => Ok(MatrixDtype::F64),
            other => Err(format!("unknown dtype '{other}' (expected f32|f64)")),
        }
    }
}

/// What can go wrong moving a container between bytes and values.
#[derive(Debug, thiserror::Error)]
pub enum ContainerError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    /// Structural damage: wrong magic or version, truncation, CRC
    /// mismatch, impossible lengths, nonzero padding bits.
    #[error("corrupt container: {0}")]
    Corrupt(String),
    /// The bytes decode cleanly but carry values the library rejects,
    /// such as a nonpositive or non-finite scale entry.
    #[error("invalid values: {0}")]
    Numeric(lb2_core::Error),
}

fn method_tag(method: Method) -> u8 {
    match method {
        Method::Standard => 0,
        Method::RandomRotation => 1,
        Method::JointItq => 2,
    }
}

fn method_from_tag(tag: u8) -> Option<Method> {
    match tag {
        0 => Some(Method::Standard),
        1 => Some(Method::RandomRotation),
        2 => Some(Method::JointItq),
        _ => None,
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    /// Byte count of `elems` elements of `width` bytes, verified against
    /// the bytes left before anything is allocated.
    fn need(&self, elems: u64, width: u64) -> Result<usize, ContainerError> {
        let bytes = elems as u128 * width as u128;
        if bytes > self.remaining() as u128 {
            return Err(ContainerError::Corrupt(format!(
                "truncated at byte {}: {elems} x {width}-byte elements do not fit in the {} bytes left",
                self.pos,
                self.remaining()
            )));
        }
        Ok(bytes as usize)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ContainerError> {
        if self.remaining() < n {
            return Err(ContainerError::Corrupt(format!(
                "truncated at byte {}: wanted {n} more, have {}",
                self.pos,
                self.remaining()
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ContainerError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, ContainerError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ContainerError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// `n` f32 values widened to f64.
    fn f32_vec(&mut self, n: u64) -> Result<Vec<f64>, ContainerError> {
        let bytes = self.take(self.need(n, 4)?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect())
    }

    fn f64_vec(&mut self, n: u64) -> Result<Vec<f64>, ContainerError> {
        let bytes = self.take(self.need(n, 8)?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn u64_vec(&mut self, n: u64) -> Result<Vec<u64>, ContainerError> {
        let bytes = self.take(self.need(n, 8)?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Validates magic, version, and the trailing CRC; returns the body bytes
/// between the version field and the checksum.
fn check_envelope<'a>(bytes: &'a [u8], magic: &[u8; 4]) -> Result<&'a [u8], ContainerError> {
    if bytes.len() < 10 {
        return Err(ContainerError::Corrupt(format!(
            "{} bytes is shorter than any container",
            bytes.len()
        )));
    }
    if &bytes[..4] != magic {
        return Err(ContainerError::Corrupt(format!(
            "bad magic {:02x?} (expected {:02x?} = {:?})",
            &bytes[..4],
            magic,
            std::str::from_utf8(magic).unwrap()
        )));
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(ContainerError::Corrupt(format!(
            "unsupported container version {version} (this build reads {FORMAT_VERSION})"
        )));
    }
    let split = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[split..].try_into().unwrap());
    let computed = crc32fast::hash(&bytes[..split]);
    if stored != computed {
        return Err(ContainerError::Corrupt(format!(
            "crc mismatch: stored {stored:08x}, computed {computed:08x}"
        )));
    }
    Ok(&bytes[6..split])
}

fn dim_usize(v: u64, what: &str) -> Result<usize, ContainerError> {
    if v == 0 {
        return Err(ContainerError::Corrupt(format!("{what} must be positive")));
    }
    usize::try_from(v)
        .map_err(|_| ContainerError::Corrupt(format!("{what} {v} exceeds this platform")))
}

fn seal(mut buf: Vec<u8>) -> Vec<u8> {
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

pub fn encode_matrix(m: &WeightMatrix, dtype: MatrixDtype) -> Vec<u8> {
    let n = m.nrows() * m.ncols();
    let mut buf = Vec::with_capacity(4 + 2 + 8 + 8 + 1 + n * dtype.byte_width() + 4);
    buf.extend_from_slice(&MATRIX_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    buf.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    buf.push(dtype.tag());
    match dtype {
        MatrixDtype::F32 => {
            for &x in m.iter() {
                buf.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        MatrixDtype::F64 => {
            for &x in m.iter() {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    seal(buf)
}

pub fn decode_matrix(bytes: &[u8]) -> Result<(WeightMatrix, MatrixDtype), ContainerError> {
    let mut c = Cursor::new(check_envelope(bytes, &MATRIX_MAGIC)?);
    let d_out = dim_usize(c.u64()?, "d_out")?;
    let d_in = dim_usize(c.u64()?, "d_in")?;
    let tag = c.u8()?;
    let dtype = MatrixDtype::from_tag(tag)
        .ok_or_else(|| ContainerError::Corrupt(format!("unknown dtype tag {tag}")))?;
    let n = d_out as u64 * d_in as u64;
    let data = match dtype {
        MatrixDtype::F32 => c.f32_vec(n)?,
        MatrixDtype::F64 => c.f64_vec(n)?,
    };
    if c.remaining() != 0 {
        return Err(ContainerError::Corrupt(format!(
            "{} trailing bytes after the payload",
            c.remaining()
        )));
    }
    let m = Array2::from_shape_vec((d_out, d_in), data)
        .expect("payload length was validated against the dims");
    Ok((m, dtype))
}

pub fn encode_layer(layer: &CompressedLayer) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&LAYER_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(layer.d_out() as u64).to_le_bytes());
    buf.extend_from_slice(&(layer.d_in() as u64).to_le_bytes());
    buf.extend_from_slice(&(layer.rank() as u32).to_le_bytes());
    buf.push(method_tag(layer.method()));
    buf.push(layer.paths().len() as u8);
    let prov = layer.provenance();
    buf.extend_from_slice(&prov.seed.to_le_bytes());
    buf.extend_from_slice(&prov.iterations.to_le_bytes());
    for path in layer.paths() {
        for scales in [path.scales().h(), path.scales().l(), path.scales().g()] {
            for &x in scales {
                buf.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        for factor in [path.u_binary(), path.v_binary()] {
            buf.extend_from_slice(&(factor.words().len() as u64).to_le_bytes());
            for &word in factor.words() {
                buf.extend_from_slice(&word.to_le_bytes());
            }
        }
    }
    seal(buf)
}

pub fn decode_layer(bytes: &[u8]) -> Result<CompressedLayer, ContainerError> {
    let mut c = Cursor::new(check_envelope(bytes, &LAYER_MAGIC)?);
    let d_out = dim_usize(c.u64()?, "d_out")?;
    let d_in = dim_usize(c.u64()?, "d_in")?;
    let rank = dim_usize(c.u32()? as u64, "rank")?;
    let tag = c.u8()?;
    let method = method_from_tag(tag)
        .ok_or_else(|| ContainerError::Corrupt(format!("unknown method tag {tag}")))?;
    let path_count = c.u8()?;
    if !(1..=2).contains(&path_count) {
        return Err(ContainerError::Corrupt(format!(
            "path count {path_count} outside 1..=2"
        )));
    }
    let seed = c.u64()?;
    let iterations = c.u32()?;

    let words_per_row = rank.div_ceil(64) as u64;
    let mut paths = Vec::with_capacity(path_count as usize);
    for p in 0..path_count {
        let h = c.f32_vec(d_out as u64)?;
        let l = c.f32_vec(rank as u64)?;
        let g = c.f32_vec(d_in as u64)?;
        let mut factors = Vec::with_capacity(2);
        for (side, rows) in [("U", d_out), ("V", d_in)] {
            let stored_len = c.u64()?;
            let expected = rows as u64 * words_per_row;
            if stored_len != expected {
                return Err(ContainerError::Corrupt(format!(
                    "path {p} factor {side}: {stored_len} words stored, \
                     {expected} expected for {rows} rows at rank {rank}"
                )));
            }
            let words = c.u64_vec(stored_len)?;
            factors.push(
                PackedBinaryFactor::from_words(rows, rank, words)
                    .map_err(|e| ContainerError::Corrupt(e.to_string()))?,
            );
        }
        let scales = TriScale::new(
            Array1::from_vec(h),
            Array1::from_vec(l),
            Array1::from_vec(g),
        )
        .map_err(ContainerError::Numeric)?;
        let v_binary = factors.pop().expect("two factors pushed");
        let u_binary = factors.pop().expect("two factors pushed");
        paths.push(
            QuantizedPath::new(u_binary, v_binary, scales)
                .map_err(|e| ContainerError::Corrupt(e.to_string()))?,
        );
    }
    if c.remaining() != 0 {
        return Err(ContainerError::Corrupt(format!(
            "{} trailing bytes after the last path",
            c.remaining()
        )));
    }
    CompressedLayer::new(paths, method, Provenance { seed, iterations })
        .map_err(|e| ContainerError::Corrupt(e.to_string()))
}

pub fn save_matrix(
    path: &Path,
    m: &WeightMatrix,
    dtype: MatrixDtype,
) -> Result<(), ContainerError> {
    Ok(fs::write(path, encode_matrix(m, dtype))?)
}

pub fn load_matrix(path: &Path) -> Result<(WeightMatrix, MatrixDtype), ContainerError> {
    decode_matrix(&fs::read(path)?)
}

pub fn save_layer(path: &Path, layer: &CompressedLayer) -> Result<(), ContainerError> {
    Ok(fs::write(path, encode_layer(layer))?)
}

pub fn load_layer(path: &Path) -> Result<CompressedLayer, ContainerError> {
    decode_layer(&fs::read(path)?)
}
