//! Image-hashing baselines and structural similarity.
//!
//! Every hash scales the input onto a small grayscale grid and emits a
//! 1024-bit vector compared under Hamming distance. Threshold ties
//! (value == threshold) always produce a 0 bit.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Raster;

pub const HASH_BITS: usize = 1024;
const WORDS: usize = HASH_BITS / 64;
const GRID: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HashKind {
    Average,
    Difference,
    Perceptual,
    Wavelet,
}

impl HashKind {
    pub const ALL: [HashKind; 4] =
        [HashKind::Average, HashKind::Difference, HashKind::Perceptual, HashKind::Wavelet];

    pub fn as_str(self) -> &'static str {
        match self {
            HashKind::Average => "average",
            HashKind::Difference => "difference",
            HashKind::Perceptual => "perceptual",
            HashKind::Wavelet => "wavelet",
        }
    }

    fn code(self) -> u8 {
        match self {
            HashKind::Average => 0,
            HashKind::Difference => 1,
            HashKind::Perceptual => 2,
            HashKind::Wavelet => 3,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => HashKind::Average,
            1 => HashKind::Difference,
            2 => HashKind::Perceptual,
            3 => HashKind::Wavelet,
            _ => return None,
        })
    }
}

impl std::str::FromStr for HashKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "average" => Ok(HashKind::Average),
            "difference" => Ok(HashKind::Difference),
            "perceptual" => Ok(HashKind::Perceptual),
            "wavelet" => Ok(HashKind::Wavelet),
            _ => Err(Error::Usage(format!(
                "unknown hash kind {s:?} (want average|difference|perceptual|wavelet)"
            ))),
        }
    }
}

impl fmt::Display for HashKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Packed 1024-bit hash tagged with the algorithm that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BitVector1024 {
    pub kind: HashKind,
    words: [u64; WORDS],
}

impl BitVector1024 {
    pub fn zero(kind: HashKind) -> Self {
        BitVector1024 { kind, words: [0; WORDS] }
    }

    #[inline]
    pub fn set(&mut self, bit: usize) {
        debug_assert!(bit < HASH_BITS);
        self.words[bit / 64] |= 1 << (bit % 64);
    }

    #[inline]
    pub fn get(&self, bit: usize) -> bool {
        self.words[bit / 64] >> (bit % 64) & 1 == 1
    }

    pub fn popcount(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn complement(&self) -> Self {
        let mut words = self.words;
        for w in &mut words {
            *w = !*w;
        }
        BitVector1024 { kind: self.kind, words }
    }

    /// 128-byte little-endian packing used by the sidecar file.
    pub fn to_bytes(&self) -> [u8; 128] {
        let mut out = [0u8; 128];
        for (i, w) in self.words.iter().enumerate() {
            out[i * 8..(i + 1) * 8].copy_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(kind: HashKind, bytes: &[u8; 128]) -> Self {
        let mut words = [0u64; WORDS];
        for (i, w) in words.iter_mut().enumerate() {
            *w = u64::from_le_bytes(bytes[i * 8..(i + 1) * 8].try_into().unwrap());
        }
        BitVector1024 { kind, words }
    }

    pub fn hex(&self) -> String {
        self.to_bytes().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Hamming distance between two hashes of the same kind (0..=1024).
pub fn hamming(a: &BitVector1024, b: &BitVector1024) -> Result<u32> {
    if a.kind != b.kind {
        return Err(Error::Usage(format!(
            "hamming distance between different hash kinds: {} vs {}",
            a.kind, b.kind
        )));
    }
    Ok(hamming_unchecked(a, b))
}

#[inline]
pub(crate) fn hamming_unchecked(a: &BitVector1024, b: &BitVector1024) -> u32 {
    a.words.iter().zip(&b.words).map(|(x, y)| (x ^ y).count_ones()).sum()
}

/// Grayscale image with f32 luma on the 0..=255 scale.
#[derive(Debug, Clone)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f32>) -> Result<Self> {
        if pixels.len() != width * height || width == 0 || height == 0 {
            return Err(Error::Shape(format!(
                "gray image {width}x{height} needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(GrayImage { width, height, pixels })
    }

    pub fn constant(width: usize, height: usize, luma: f32) -> Self {
        GrayImage { width, height, pixels: vec![luma; width * height] }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }
}

/// Bilinear resize to `width` x `height`, then ITU-R 601 luma.
pub fn to_gray(raster: &Raster, width: usize, height: usize) -> GrayImage {
    let small = raster.resize_bilinear(width, height);
    let pixels = small
        .data
        .chunks_exact(3)
        .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
        .collect();
    GrayImage { width, height, pixels }
}

/// Canonical 32x32 grid used by all hashes except the difference hash.
pub fn to_gray32(raster: &Raster) -> GrayImage {
    to_gray(raster, GRID, GRID)
}

fn expect_grid(g: &GrayImage, w: usize, h: usize) -> Result<()> {
    if g.width != w || g.height != h {
        return Err(Error::Shape(format!(
            "expected {w}x{h} gray image, got {}x{}",
            g.width, g.height
        )));
    }
    Ok(())
}

/// Bit per pixel: 1 iff the pixel strictly exceeds the global mean.
pub fn average_hash(g: &GrayImage) -> Result<BitVector1024> {
    expect_grid(g, GRID, GRID)?;
    let mean = g.pixels.iter().map(|&v| v as f64).sum::<f64>() / (GRID * GRID) as f64;
    let mut out = BitVector1024::zero(HashKind::Average);
    for (i, &p) in g.pixels.iter().enumerate() {
        if (p as f64) > mean {
            out.set(i);
        }
    }
    Ok(out)
}

/// Horizontal-gradient hash over a 33x32 grid: bit(r,c) = px(r,c+1) > px(r,c).
pub fn difference_hash(raster: &Raster) -> BitVector1024 {
    let g = to_gray(raster, GRID + 1, GRID);
    difference_hash_gray(&g).expect("33x32 grid by construction")
}

pub fn difference_hash_gray(g: &GrayImage) -> Result<BitVector1024> {
    expect_grid(g, GRID + 1, GRID)?;
    let mut out = BitVector1024::zero(HashKind::Difference);
    for r in 0..GRID {
        for c in 0..GRID {
            if g.at(c + 1, r) > g.at(c, r) {
                out.set(r * GRID + c);
            }
        }
    }
    Ok(out)
}

/// Which coefficients feed the bit threshold's median.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MedianMode {
    /// Exclude the DC / LL(0,0) term so it cannot swamp the threshold.
    #[default]
    ExcludeDc,
    /// Median over every coefficient.
    All,
}

/// Frequency-pattern hash via the 2-D orthonormal DCT-II of the 32x32 image.
pub fn perceptual_hash(g: &GrayImage) -> Result<BitVector1024> {
    perceptual_hash_with(g, MedianMode::default())
}

pub fn perceptual_hash_with(g: &GrayImage, mode: MedianMode) -> Result<BitVector1024> {
    expect_grid(g, GRID, GRID)?;
    let coeffs = dct2d(&g.pixels);
    Ok(threshold_bits(HashKind::Perceptual, &coeffs, mode))
}

/// Single-level 2-D Haar transform hash; subbands ordered LL, LH, HL, HH.
pub fn wavelet_hash(g: &GrayImage) -> Result<BitVector1024> {
    wavelet_hash_with(g, MedianMode::default())
}

pub fn wavelet_hash_with(g: &GrayImage, mode: MedianMode) -> Result<BitVector1024> {
    expect_grid(g, GRID, GRID)?;
    let coeffs = haar2d(&g.pixels);
    Ok(threshold_bits(HashKind::Wavelet, &coeffs, mode))
}

/// bit_i = 1 iff coefficient_i > median; the excluded term still gets a bit
/// under the same rule.
fn threshold_bits(kind: HashKind, coeffs: &[f64; HASH_BITS], mode: MedianMode) -> BitVector1024 {
    let mut pool: Vec<f64> = match mode {
        MedianMode::ExcludeDc => coeffs[1..].to_vec(),
        MedianMode::All => coeffs.to_vec(),
    };
    pool.sort_by(f64::total_cmp);
    let median = pool[pool.len() / 2];
    let mut out = BitVector1024::zero(kind);
    for (i, &c) in coeffs.iter().enumerate() {
        if c > median {
            out.set(i);
        }
    }
    out
}

/// 2-D orthonormal DCT-II, separable rows-then-columns.
fn dct2d(pixels: &[f32]) -> [f64; HASH_BITS] {
    // basis[v][j] = a(v) * cos((2j+1) v pi / (2N))
    let mut basis = [[0f64; GRID]; GRID];
    let n = GRID as f64;
    for v in 0..GRID {
        let a = if v == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
        for j in 0..GRID {
            basis[v][j] = a * (std::f64::consts::PI * (2 * j + 1) as f64 * v as f64 / (2.0 * n)).cos();
        }
    }
    let mut rows = [[0f64; GRID]; GRID];
    for i in 0..GRID {
        for v in 0..GRID {
            let mut acc = 0.0;
            for j in 0..GRID {
                acc += pixels[i * GRID + j] as f64 * basis[v][j];
            }
            rows[i][v] = acc;
        }
    }
    let mut out = [0f64; HASH_BITS];
    for u in 0..GRID {
        for v in 0..GRID {
            let mut acc = 0.0;
            for i in 0..GRID {
                acc += rows[i][v] * basis[u][i];
            }
            out[u * GRID + v] = acc;
        }
    }
    out
}

/// Single-level Haar: rows then columns, pairs averaged/differenced with
/// 1/sqrt(2) normalization. Output grid quadrants: LL top-left, LH top-right,
/// HL bottom-left, HH bottom-right, concatenated row-major per subband.
fn haar2d(pixels: &[f32]) -> [f64; HASH_BITS] {
    let inv = std::f64::consts::FRAC_1_SQRT_2;
    let half = GRID / 2;
    let mut rows = [[0f64; GRID]; GRID];
    for r in 0..GRID {
        for j in 0..half {
            let x0 = pixels[r * GRID + 2 * j] as f64;
            let x1 = pixels[r * GRID + 2 * j + 1] as f64;
            rows[r][j] = (x0 + x1) * inv;
            rows[r][half + j] = (x0 - x1) * inv;
        }
    }
    let mut grid = [[0f64; GRID]; GRID];
    for c in 0..GRID {
        for i in 0..half {
            let y0 = rows[2 * i][c];
            let y1 = rows[2 * i + 1][c];
            grid[i][c] = (y0 + y1) * inv;
            grid[half + i][c] = (y0 - y1) * inv;
        }
    }
    let mut out = [0f64; HASH_BITS];
    let mut k = 0;
    for (r0, c0) in [(0, 0), (0, half), (half, 0), (half, half)] {
        for r in r0..r0 + half {
            for c in c0..c0 + half {
                out[k] = grid[r][c];
                k += 1;
            }
        }
    }
    out
}

/// Structural dissimilarity in [0,1]: (1 - mean SSIM) / 2 with a 7x7
/// Gaussian window (sigma 1.5) and dynamic range 255.
pub fn ssim_dissimilarity(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::Usage(format!(
            "ssim inputs differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    const WIN: usize = 7;
    const SIGMA: f64 = 1.5;
    if a.width < WIN || a.height < WIN {
        return Err(Error::Usage(format!(
            "ssim needs at least {WIN}x{WIN} input, got {}x{}",
            a.width, a.height
        )));
    }
    let c1 = (0.01f64 * 255.0).powi(2);
    let c2 = (0.03f64 * 255.0).powi(2);

    let mut w = [[0f64; WIN]; WIN];
    let mut wsum = 0.0;
    for (dy, row) in w.iter_mut().enumerate() {
        for (dx, v) in row.iter_mut().enumerate() {
            let y = dy as f64 - (WIN as f64 - 1.0) / 2.0;
            let x = dx as f64 - (WIN as f64 - 1.0) / 2.0;
            *v = (-(x * x + y * y) / (2.0 * SIGMA * SIGMA)).exp();
            wsum += *v;
        }
    }
    for row in &mut w {
        for v in row {
            *v /= wsum;
        }
    }

    let mut total = 0.0;
    let mut count = 0usize;
    for y0 in 0..=a.height - WIN {
        for x0 in 0..=a.width - WIN {
            let (mut mx, mut my) = (0.0f64, 0.0f64);
            let (mut xx, mut yy, mut xy) = (0.0f64, 0.0f64, 0.0f64);
            for dy in 0..WIN {
                for dx in 0..WIN {
                    let wv = w[dy][dx];
                    let pa = a.at(x0 + dx, y0 + dy) as f64;
                    let pb = b.at(x0 + dx, y0 + dy) as f64;
                    mx += wv * pa;
                    my += wv * pb;
                    xx += wv * pa * pa;
                    yy += wv * pb * pb;
                    xy += wv * pa * pb;
                }
            }
            let vx = xx - mx * mx;
            let vy = yy - my * my;
            let cov = xy - mx * my;
            let ssim = ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            total += ssim;
            count += 1;
        }
    }
    Ok((1.0 - total / count as f64) / 2.0)
}

const SIDECAR_MAGIC: &[u8; 8] = b"IFHASHS1";

/// Write an app_id -> 128-byte hash sidecar.
pub fn write_hash_sidecar(
    path: impl AsRef<Path>,
    kind: HashKind,
    entries: &[(String, BitVector1024)],
) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    let go = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        w.write_all(SIDECAR_MAGIC)?;
        w.write_all(&[kind.code()])?;
        w.write_all(&(entries.len() as u32).to_le_bytes())?;
        for (id, bits) in entries {
            debug_assert_eq!(bits.kind, kind);
            let id_bytes = id.as_bytes();
            w.write_all(&(id_bytes.len() as u16).to_le_bytes())?;
            w.write_all(id_bytes)?;
            w.write_all(&bits.to_bytes())?;
        }
        w.flush()
    };
    go(&mut w).map_err(|e| Error::io(path, e))
}

pub fn read_hash_sidecar(path: impl AsRef<Path>) -> Result<(HashKind, Vec<(String, BitVector1024)>)> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut head = [0u8; 13];
    r.read_exact(&mut head).map_err(|e| Error::io(path, e))?;
    if &head[..8] != SIDECAR_MAGIC {
        return Err(Error::TensorFormat { path: path.into(), reason: "bad sidecar magic".into() });
    }
    let kind = HashKind::from_code(head[8]).ok_or_else(|| Error::TensorFormat {
        path: path.into(),
        reason: format!("unknown hash kind code {}", head[8]),
    })?;
    let count = u32::from_le_bytes(head[9..13].try_into().unwrap()) as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let mut len_b = [0u8; 2];
        r.read_exact(&mut len_b).map_err(|e| Error::io(path, e))?;
        let mut id = vec![0u8; u16::from_le_bytes(len_b) as usize];
        r.read_exact(&mut id).map_err(|e| Error::io(path, e))?;
        let id = String::from_utf8(id).map_err(|e| Error::TensorFormat {
            path: path.into(),
            reason: format!("non-utf8 app id: {e}"),
        })?;
        let mut bytes = [0u8; 128];
        r.read_exact(&mut bytes).map_err(|e| Error::io(path, e))?;
        entries.push((id, BitVector1024::from_bytes(kind, &bytes)));
    }
    Ok((kind, entries))
}
