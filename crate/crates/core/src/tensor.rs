//! Dense row-major f32 tensors and the `IFTENSR1` interchange file format.
//!
//! The on-disk layout is fixed and language-neutral: an 8-byte magic
//! (`IFTENSR1`), one dtype byte (0 = f32), one rank byte (1..=4), `ndim`
//! little-endian `u64` dimension sizes, then the raw little-endian f32
//! payload in row-major order. Round-trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const TENSOR_MAGIC: &[u8; 8] = b"IFTENSR1";
pub const DTYPE_F32: u8 = 0;
pub const MAX_NDIM: usize = 4;

/// Dense row-major numeric array; the interchange unit for feature maps
/// and embedding vectors. Only f32 payloads exist in format v1.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if dims.is_empty() || dims.len() > MAX_NDIM {
            return Err(Error::Shape(format!(
                "tensor rank must be 1..={MAX_NDIM}, got {}",
                dims.len()
            )));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!("zero-sized dimension in {dims:?}")));
        }
        let expect: usize = dims.iter().product();
        if expect != data.len() {
            return Err(Error::Shape(format!(
                "payload length {} does not match dims {:?} (expect {})",
                data.len(),
                dims,
                expect
            )));
        }
        Ok(Tensor { dims, data })
    }

    /// 1-d tensor over `data`.
    pub fn vector(data: Vec<f32>) -> Result<Self> {
        let n = data.len();
        Tensor::new(vec![n], data)
    }

    /// 2-d row-major tensor.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        let n = dims.iter().product();
        Tensor::new(dims, vec![0.0; n])
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Row `i` of a 2-d tensor.
    pub fn row(&self, i: usize) -> &[f32] {
        debug_assert_eq!(self.ndim(), 2);
        let cols = self.dims[1];
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Reinterpret as a 2-d tensor without touching the payload.
    pub fn reshape(mut self, dims: Vec<usize>) -> Result<Self> {
        let expect: usize = dims.iter().product();
        if expect != self.data.len() || dims.is_empty() || dims.len() > MAX_NDIM {
            return Err(Error::Shape(format!(
                "cannot reshape {} elements to {dims:?}",
                self.data.len()
            )));
        }
        self.dims = dims;
        Ok(self)
    }
}

/// Serialized byte size of a tensor with the given dims.
pub fn file_size(dims: &[usize]) -> usize {
    let payload: usize = dims.iter().product::<usize>() * 4;
    8 + 1 + 1 + dims.len() * 8 + payload
}

pub fn write_tensor(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_tensor_to(t, &mut w).map_err(|e| Error::io(path, e))
}

fn write_tensor_to<W: Write>(t: &Tensor, w: &mut W) -> std::io::Result<()> {
    w.write_all(TENSOR_MAGIC)?;
    w.write_all(&[DTYPE_F32, t.ndim() as u8])?;
    for &d in t.dims() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    // Payload goes out in row-major order, one LE word per element.
    let mut buf = Vec::with_capacity(8192);
    for chunk in t.data().chunks(2048) {
        buf.clear();
        for v in chunk {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| format_err(path, "file shorter than magic"))?;
    if &magic != TENSOR_MAGIC {
        return Err(format_err(path, "bad magic"));
    }
    let mut head = [0u8; 2];
    r.read_exact(&mut head)
        .map_err(|_| format_err(path, "missing dtype/ndim header"))?;
    if head[0] != DTYPE_F32 {
        return Err(format_err(path, &format!("unsupported dtype code {}", head[0])));
    }
    let ndim = head[1] as usize;
    if ndim == 0 || ndim > MAX_NDIM {
        return Err(format_err(path, &format!("rank {ndim} outside 1..={MAX_NDIM}")));
    }
    let mut dims = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)
            .map_err(|_| format_err(path, "truncated dims header"))?;
        let d = u64::from_le_bytes(b);
        if d == 0 {
            return Err(format_err(path, "zero-sized dimension"));
        }
        dims.push(d as usize);
    }
    let count: usize = dims.iter().product();
    let mut payload = vec![0u8; count * 4];
    r.read_exact(&mut payload).map_err(|_| Error::TensorCorrupt {
        path: path.to_path_buf(),
        reason: format!("payload shorter than {} elements", count),
    })?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::TensorCorrupt {
            path: path.to_path_buf(),
            reason: "trailing bytes after payload".into(),
        });
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Tensor::new(dims, data)
}

fn format_err(path: &Path, reason: &str) -> Error {
    Error::TensorFormat { path: path.to_path_buf(), reason: reason.to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn scalar_like_file_is_22_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("one.iftensr");
        write_tensor(&Tensor::vector(vec![1.0]).unwrap(), &p).unwrap();
        assert_eq!(std::fs::metadata(&p).unwrap().len(), 22);
        assert_eq!(file_size(&[1]), 22);
    }

    #[test]
    fn header_declares_dims_and_zero_payload() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("z.iftensr");
        write_tensor(&Tensor::zeros(vec![2, 3]).unwrap(), &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..8], TENSOR_MAGIC);
        assert_eq!(bytes[8], DTYPE_F32);
        assert_eq!(bytes[9], 2);
        assert_eq!(u64::from_le_bytes(bytes[10..18].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[18..26].try_into().unwrap()), 3);
        assert_eq!(&bytes[26..], &[0u8; 24]);
    }

    #[test]
    fn random_4096_vector_round_trips_bit_exactly() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let data: Vec<f32> = (0..4096).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let t = Tensor::vector(data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.iftensr");
        write_tensor(&t, &p).unwrap();
        let back = read_tensor(&p).unwrap();
        assert_eq!(t.dims(), back.dims());
        for (a, b) in t.data().iter().zip(back.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn wrong_magic_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.iftensr");
        std::fs::write(&p, b"NOTMAGIC\x00\x01").unwrap();
        match read_tensor(&p) {
            Err(Error::TensorFormat { .. }) => {}
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_payload_is_corruption_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("trunc.iftensr");
        write_tensor(&Tensor::vector(vec![1.0, 2.0, 3.0]).unwrap(), &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 5]).unwrap();
        match read_tensor(&p) {
            Err(Error::TensorCorrupt { .. }) => {}
            other => panic!("expected corruption error, got {other:?}"),
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![0], vec![]).is_err());
        assert!(Tensor::new(vec![1, 1, 1, 1, 1], vec![0.0]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_any_finite_payload(
            rows in 1usize..6,
            cols in 1usize..6,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f32> = (0..rows * cols)
                .map(|_| f32::from_bits(rng.gen::<u32>()))
                .map(|v| if v.is_finite() { v } else { 0.0 })
                .collect();
            let t = Tensor::matrix(rows, cols, data).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("t.iftensr");
            write_tensor(&t, &p).unwrap();
            let back = read_tensor(&p).unwrap();
            prop_assert_eq!(back.dims(), t.dims());
            for (a, b) in t.data().iter().zip(back.data()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
