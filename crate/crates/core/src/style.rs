//! Style representations: Gram matrices over convolutional feature maps,
//! optional kernel-space transforms, upper-triangular flattening, and very
//! sparse random projection down to the final style embedding.
//!
//! The Gram matrix of a feature map F (N filters x M positions) is
//! G_ij = sum_k F_ik F_jk. Its upper triangle plus diagonal, flattened
//! row-major, is the raw style vector of dimension N(N+1)/2. That vector is
//! reduced to k dimensions by a sparse random matrix R whose entries are
//! +-D^(1/4) with probability 1/(2 sqrt(D)) each and 0 otherwise, applied as
//! B = (1/sqrt(k)) A R.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::inference::FeatureMap;
use crate::tensor::Tensor;

/// Symmetric matrix of pairwise filter-response dot products.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    n: usize,
    values: Tensor,
}

impl GramMatrix {
    fn from_raw(n: usize, data: Vec<f32>) -> Self {
        GramMatrix { n, values: Tensor::matrix(n, n, data).expect("square by construction") }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f32 {
        self.values.data()[i * self.n + j]
    }
}

#[inline]
fn row_dot(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        acc += *x as f64 * *y as f64;
    }
    acc
}

/// Pairwise dot products of filter rows; the upper triangle is computed once
/// and mirrored, so the result is exactly symmetric.
pub fn gram_matrix(f: &FeatureMap) -> GramMatrix {
    gram_of_rows(f.channels(), f.spatial(), f.values().data())
}

fn gram_of_rows(n: usize, m: usize, rows: &[f32]) -> GramMatrix {
    let mut data = vec![0.0f32; n * n];
    // Each output row owns its strip; fill i<=j then mirror.
    let strips: Vec<(usize, Vec<f32>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let ri = &rows[i * m..(i + 1) * m];
            let strip: Vec<f32> = (i..n)
                .map(|j| row_dot(ri, &rows[j * m..(j + 1) * m]) as f32)
                .collect();
            (i, strip)
        })
        .collect();
    for (i, strip) in strips {
        for (off, v) in strip.into_iter().enumerate() {
            let j = i + off;
            data[i * n + j] = v;
            data[j * n + i] = v;
        }
    }
    GramMatrix::from_raw(n, data)
}

/// Row-major upper-triangular flatten (i <= j): (0,0),(0,1),..,(1,1),..
/// Length is n(n+1)/2.
pub fn flatten_upper(g: &GramMatrix) -> Tensor {
    let n = g.n();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            out.push(g.at(i, j));
        }
    }
    Tensor::vector(out).expect("non-empty")
}

/// Raw style dimension produced by an n-channel layer.
pub fn style_dim(channels: usize) -> usize {
    channels * (channels + 1) / 2
}

/// Sparse random projection matrix with entries in {+D^(1/4), -D^(1/4), 0},
/// stored as per-column (row index, sign) lists.
///
/// Entries come from a counter-based generator keyed by (seed, row, column),
/// so any entry is recomputable without materializing the matrix and the
/// result is independent of generation order.
#[derive(Debug, Clone)]
pub struct ProjectionMatrix {
    input_dim: usize,
    output_dim: usize,
    seed: u64,
    scale: f64,
    columns: Vec<Vec<(u32, i8)>>,
}

impl ProjectionMatrix {
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Magnitude of every nonzero entry: D^(1/4).
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn columns(&self) -> &[Vec<(u32, i8)>] {
        &self.columns
    }

    pub fn nonzero_count(&self) -> usize {
        self.columns.iter().map(Vec::len).sum()
    }

    /// Materialize one entry (mostly for oracles and audits).
    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.scale * sample_sign(self.seed, row as u64, col as u64, self.input_dim) as f64
    }
}

#[inline]
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Sign of entry (row, col): +1 / -1 with probability 1/(2 sqrt(D)) each,
/// 0 otherwise.
#[inline]
fn sample_sign(seed: u64, row: u64, col: u64, input_dim: usize) -> i8 {
    let h = splitmix64(splitmix64(splitmix64(seed) ^ row) ^ col);
    // Uniform in [0,1) from the top 53 bits.
    let u = (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    let p = 1.0 / (input_dim as f64).sqrt();
    if u < 0.5 * p {
        1
    } else if u < p {
        -1
    } else {
        0
    }
}

pub fn make_projection(input_dim: usize, output_dim: usize, seed: u64) -> ProjectionMatrix {
    assert!(input_dim >= 1 && output_dim >= 1);
    let columns: Vec<Vec<(u32, i8)>> = (0..output_dim)
        .into_par_iter()
        .map(|col| {
            let mut nz = Vec::new();
            for row in 0..input_dim {
                let s = sample_sign(seed, row as u64, col as u64, input_dim);
                if s != 0 {
                    nz.push((row as u32, s));
                }
            }
            nz
        })
        .collect();
    ProjectionMatrix {
        input_dim,
        output_dim,
        seed,
        scale: (input_dim as f64).powf(0.25),
        columns,
    }
}

/// B = (1/sqrt(k)) A R for a row-major batch A (n x D). Each output row is a
/// projected style embedding.
pub fn project(batch: &Tensor, p: &ProjectionMatrix) -> Result<Tensor> {
    if batch.ndim() != 2 {
        return Err(Error::Shape(format!("projection input must be 2-d, got {:?}", batch.dims())));
    }
    let (n, d) = (batch.dims()[0], batch.dims()[1]);
    if d != p.input_dim {
        return Err(Error::Shape(format!(
            "batch width {d} does not match projection input dim {}",
            p.input_dim
        )));
    }
    let k = p.output_dim;
    let factor = p.scale / (k as f64).sqrt();
    let mut out = vec![0.0f32; n * k];
    out.par_chunks_mut(k).enumerate().for_each(|(r, dst)| {
        let row = &batch.data()[r * d..(r + 1) * d];
        for (j, col) in p.columns.iter().enumerate() {
            let mut acc = 0.0f64;
            for &(i, s) in col {
                let v = row[i as usize] as f64;
                if s > 0 {
                    acc += v;
                } else {
                    acc -= v;
                }
            }
            dst[j] = (acc * factor) as f32;
        }
    });
    Tensor::matrix(n, k, out)
}

/// Project a single raw style vector.
pub fn project_vector(v: &[f32], p: &ProjectionMatrix) -> Result<Vec<f32>> {
    let t = Tensor::matrix(1, v.len(), v.to_vec())?;
    Ok(project(&t, p)?.into_data())
}

/// Elementwise polynomial kernel on filter-response rows:
/// G'_ij = (dot(row_i, row_j) + a)^b.
pub fn kernel_poly(f: &FeatureMap, a: f64, b: f64) -> Result<GramMatrix> {
    if b == 0.0 {
        return Err(Error::Domain("polynomial kernel power must be nonzero".into()));
    }
    let is_int = b.fract() == 0.0 && b.abs() <= i32::MAX as f64;
    let g = gram_matrix(f);
    let n = g.n();
    let mut data = vec![0.0f32; n * n];
    for i in 0..n {
        for j in i..n {
            let base = g.at(i, j) as f64 + a;
            let v = if is_int {
                base.powi(b as i32)
            } else if base < 0.0 {
                return Err(Error::Domain(format!(
                    "non-integer power {b} of negative base at ({i},{j})"
                )));
            } else {
                base.powf(b)
            };
            data[i * n + j] = v as f32;
            data[j * n + i] = v as f32;
        }
    }
    Ok(GramMatrix::from_raw(n, data))
}

/// Gram of the feature map with a fixed bias added to every entry.
pub fn kernel_shift(f: &FeatureMap, c: f64) -> GramMatrix {
    let shifted: Vec<f32> = f.values().data().iter().map(|&v| (v as f64 + c) as f32).collect();
    gram_of_rows(f.channels(), f.spatial(), &shifted)
}

/// Elementwise exp(G_ij / d).
pub fn kernel_sqexp(g: &GramMatrix, d: f64) -> Result<GramMatrix> {
    if d <= 0.0 {
        return Err(Error::Domain(format!("squared-exponential variance must be > 0, got {d}")));
    }
    let n = g.n();
    let mut data = vec![0.0f32; n * n];
    for i in 0..n {
        for j in i..n {
            let v = (g.at(i, j) as f64 / d).exp();
            if !v.is_finite() || v as f32 == f32::INFINITY {
                return Err(Error::Range(format!(
                    "exp overflow at ({i},{j}): G={} d={d}",
                    g.at(i, j)
                )));
            }
            data[i * n + j] = v as f32;
            data[j * n + i] = v as f32;
        }
    }
    Ok(GramMatrix::from_raw(n, data))
}

/// Kernel-space transform applied to a feature map before flattening.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum KernelTransform {
    #[default]
    None,
    Poly {
        a: f64,
        b: f64,
    },
    Shift {
        c: f64,
    },
    SqExp {
        d: f64,
    },
}

impl KernelTransform {
    pub fn apply(&self, f: &FeatureMap) -> Result<GramMatrix> {
        match *self {
            KernelTransform::None => Ok(gram_matrix(f)),
            KernelTransform::Poly { a, b } => kernel_poly(f, a, b),
            KernelTransform::Shift { c } => Ok(kernel_shift(f, c)),
            KernelTransform::SqExp { d } => kernel_sqexp(&gram_matrix(f), d),
        }
    }
}

impl std::str::FromStr for KernelTransform {
    type Err = Error;

    /// Accepts `none`, `poly(a,b)`, `shift(c)`, `sqexp(d)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "none" {
            return Ok(KernelTransform::None);
        }
        let (name, rest) = s
            .split_once('(')
            .ok_or_else(|| Error::Usage(format!("bad kernel spec {s:?}")))?;
        let args = rest
            .strip_suffix(')')
            .ok_or_else(|| Error::Usage(format!("bad kernel spec {s:?}")))?;
        let nums: Vec<f64> = args
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Usage(format!("bad kernel argument in {s:?}: {e}")))?;
        match (name, nums.as_slice()) {
            ("poly", [a, b]) => Ok(KernelTransform::Poly { a: *a, b: *b }),
            ("shift", [c]) => Ok(KernelTransform::Shift { c: *c }),
            ("sqexp", [d]) => Ok(KernelTransform::SqExp { d: *d }),
            _ => Err(Error::Usage(format!("bad kernel spec {s:?}"))),
        }
    }
}
