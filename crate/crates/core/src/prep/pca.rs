use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::Cube;

pub const PCA_MAGIC: &[u8; 6] = b"HSPCA1";

const JACOBI_REL_TOL: f64 = 1e-10;
const JACOBI_MAX_SWEEPS: usize = 100;
const COV_CHUNK: usize = 1024;

/// Eigendecomposition of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigen {
    pub n: usize,
    /// Non-increasing.
    pub values: Vec<f64>,
    /// Row-major `n x n`; column `j` is the eigenvector of `values[j]`.
    pub vectors: Vec<f64>,
    pub sweeps: usize,
}

impl Eigen {
    pub fn vector(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.vectors[i * self.n + j]).collect()
    }
}

/// Cyclic Jacobi eigendecomposition of the symmetric row-major matrix `a`.
///
/// Sweeps stop once the off-diagonal Frobenius norm drops below
/// `1e-10 * ||A||_F` (or after 100 sweeps). Eigenpairs come back sorted by
/// decreasing eigenvalue and each eigenvector is signed so that its
/// largest-magnitude entry is positive.
pub fn jacobi_eigen(a: &[f64], n: usize) -> Result<Eigen> {
    if a.len() != n * n {
        return Err(Error::Dimension(format!("expected {n}x{n} matrix, got {} entries", a.len())));
    }
    let mut m = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let norm = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut sweeps = 0;
    while sweeps < JACOBI_MAX_SWEEPS {
        let off = off_diagonal_norm(&m, n);
        if off <= JACOBI_REL_TOL * norm {
            break;
        }
        sweeps += 1;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut m, &mut v, n, p, q, c, s);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j * n + j].total_cmp(&m[i * n + i]));
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (dst, &src) in order.iter().enumerate() {
        let mut pivot = 0;
        for i in 0..n {
            if v[i * n + src].abs() > v[pivot * n + src].abs() {
                pivot = i;
            }
        }
        let sign = if v[pivot * n + src] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[i * n + dst] = sign * v[i * n + src];
        }
    }
    Ok(Eigen { n, values, vectors, sweeps })
}

fn off_diagonal_norm(m: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += m[i * n + j] * m[i * n + j];
            }
        }
    }
    s.sqrt()
}

/// Applies `A <- J^T A J` and `V <- V J` for the plane rotation in (p, q).
fn rotate(m: &mut [f64], v: &mut [f64], n: usize, p: usize, q: usize, c: f64, s: f64) {
    for k in 0..n {
        let (akp, akq) = (m[k * n + p], m[k * n + q]);
        m[k * n + p] = c * akp - s * akq;
        m[k * n + q] = s * akp + c * akq;
    }
    for k in 0..n {
        let (apk, aqk) = (m[p * n + k], m[q * n + k]);
        m[p * n + k] = c * apk - s * aqk;
        m[q * n + k] = s * apk + c * aqk;
    }
    m[p * n + q] = 0.0;
    m[q * n + p] = 0.0;
    for k in 0..n {
        let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
        v[k * n + p] = c * vkp - s * vkq;
        v[k * n + q] = s * vkp + c * vkq;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PcaOptions {
    /// Scale every band to unit variance before the eigendecomposition.
    pub standardize: bool,
}

/// Fitted spectral projection.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub band_means: Vec<f64>,
    /// Per-band multipliers applied after centering; present only when standardized.
    pub band_scales: Option<Vec<f64>>,
    /// Row-major `bands x n_components`, orthonormal columns.
    pub components: Vec<f64>,
    pub eigenvalues: Vec<f64>,
}

impl PcaModel {
    pub fn bands(&self) -> usize {
        self.band_means.len()
    }

    pub fn n_components(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn component(&self, j: usize) -> Vec<f64> {
        let c = self.n_components();
        (0..self.bands()).map(|i| self.components[i * c + j]).collect()
    }

    /// Projects one spectrum into `out` (length `n_components`).
    pub fn project(&self, pixel: &[f32], centered: &mut [f64], out: &mut [f64]) {
        let nc = self.n_components();
        for (b, (dst, &x)) in centered.iter_mut().zip(pixel).enumerate() {
            let mut d = f64::from(x) - self.band_means[b];
            if let Some(scales) = &self.band_scales {
                d *= scales[b];
            }
            *dst = d;
        }
        out.fill(0.0);
        for (b, &d) in centered.iter().enumerate() {
            let row = &self.components[b * nc..(b + 1) * nc];
            for (o, &w) in out.iter_mut().zip(row) {
                *o += w * d;
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&PcaHeader {
            bands: self.bands(),
            components: self.n_components(),
            standardized: self.band_scales.is_some(),
        })
        .expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(PCA_MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        let mut put = |xs: &[f64]| {
            for x in xs {
                out.extend_from_slice(&x.to_le_bytes());
            }
        };
        put(&self.band_means);
        put(&self.eigenvalues);
        put(&self.components);
        if let Some(scales) = &self.band_scales {
            put(scales);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 10 || &bytes[..6] != PCA_MAGIC {
            return Err(Error::Format("missing HSPCA1 magic".into()));
        }
        let header_len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let start = 10 + header_len;
        if bytes.len() < start {
            return Err(Error::Length { expected: start, got: bytes.len() });
        }
        let header: PcaHeader = serde_json::from_slice(&bytes[10..start])?;
        if header.components > header.bands {
            return Err(Error::Format("more components than bands".into()));
        }
        let (b, c) = (header.bands, header.components);
        let n_values = b + c + b * c + if header.standardized { b } else { 0 };
        let expected = start + 8 * n_values;
        if bytes.len() != expected {
            return Err(Error::Length { expected, got: bytes.len() });
        }
        let mut values = bytes[start..]
            .chunks_exact(8)
            .map(|x| f64::from_le_bytes(x.try_into().unwrap()));
        let mut take = |k: usize| values.by_ref().take(k).collect::<Vec<_>>();
        let band_means = take(b);
        let eigenvalues = take(c);
        let components = take(b * c);
        let band_scales = header.standardized.then(|| take(b));
        Ok(PcaModel { band_means, band_scales, components, eigenvalues })
    }
}

#[derive(Serialize, Deserialize)]
struct PcaHeader {
    bands: usize,
    components: usize,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    standardized: bool,
}

/// Band means and the `bands x bands` covariance (divisor `N - 1`).
///
/// Pixels are reduced in fixed-size chunks summed in ascending order, so the
/// result does not depend on the thread count.
pub fn covariance(cube: &Cube) -> (Vec<f64>, Vec<f64>) {
    let b = cube.bands;
    let n = cube.pixel_count();
    let chunk_vals = COV_CHUNK * b;

    let partial_sums: Vec<Vec<f64>> = cube
        .data
        .par_chunks(chunk_vals.max(1))
        .map(|chunk| {
            let mut s = vec![0.0; b];
            for px in chunk.chunks_exact(b) {
                for (acc, &x) in s.iter_mut().zip(px) {
                    *acc += f64::from(x);
                }
            }
            s
        })
        .collect();
    let mut means = vec![0.0; b];
    for s in &partial_sums {
        for (m, x) in means.iter_mut().zip(s) {
            *m += x;
        }
    }
    for m in &mut means {
        *m /= n.max(1) as f64;
    }

    let partial_cov: Vec<Vec<f64>> = cube
        .data
        .par_chunks(chunk_vals.max(1))
        .map(|chunk| {
            let mut acc = vec![0.0; b * b];
            let mut d = vec![0.0; b];
            for px in chunk.chunks_exact(b) {
                for ((dst, &x), m) in d.iter_mut().zip(px).zip(&means) {
                    *dst = f64::from(x) - m;
                }
                for i in 0..b {
                    let di = d[i];
                    let row = &mut acc[i * b..i * b + b];
                    for j in i..b {
                        row[j] += di * d[j];
                    }
                }
            }
            acc
        })
        .collect();
    let mut cov = vec![0.0; b * b];
    for p in &partial_cov {
        for (c, x) in cov.iter_mut().zip(p) {
            *c += x;
        }
    }
    let denom = n.saturating_sub(1).max(1) as f64;
    for i in 0..b {
        for j in i..b {
            let v = cov[i * b + j] / denom;
            cov[i * b + j] = v;
            cov[j * b + i] = v;
        }
    }
    (means, cov)
}

pub fn fit_pca(cube: &Cube, n_components: usize, options: PcaOptions) -> Result<PcaModel> {
    let b = cube.bands;
    if n_components == 0 || n_components > b {
        return Err(Error::Dimension(format!(
            "cannot keep {n_components} components of a {b}-band cube"
        )));
    }
    if let Some(i) = cube.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("non-finite cube value at flat index {i}")));
    }
    let (band_means, mut cov) = covariance(cube);
    let band_scales = if options.standardize {
        let scales: Vec<f64> = (0..b)
            .map(|i| {
                let sd = cov[i * b + i].sqrt();
                if sd > 0.0 {
                    1.0 / sd
                } else {
                    1.0
                }
            })
            .collect();
        for i in 0..b {
            for j in 0..b {
                cov[i * b + j] *= scales[i] * scales[j];
            }
        }
        Some(scales)
    } else {
        None
    };
    let eig = jacobi_eigen(&cov, b)?;
    let mut components = vec![0.0; b * n_components];
    for i in 0..b {
        components[i * n_components..(i + 1) * n_components]
            .copy_from_slice(&eig.vectors[i * b..i * b + n_components]);
    }
    let eigenvalues = eig.values[..n_components].iter().map(|&l| l.max(0.0)).collect();
    Ok(PcaModel { band_means, band_scales, components, eigenvalues })
}

/// Projects every pixel: `out[r][c] = components^T (cube[r][c] - means)`.
pub fn apply_pca(cube: &Cube, pca: &PcaModel) -> Result<Cube> {
    if cube.bands != pca.bands() {
        return Err(Error::Dimension(format!(
            "cube has {} bands, PCA was fitted on {}",
            cube.bands,
            pca.bands()
        )));
    }
    let nc = pca.n_components();
    let mut data = vec![0.0f32; cube.pixel_count() * nc];
    data.par_chunks_mut(nc)
        .zip(cube.data.par_chunks(cube.bands))
        .for_each_init(
            || (vec![0.0; cube.bands], vec![0.0; nc]),
            |(centered, proj), (dst, px)| {
                pca.project(px, centered, proj);
                for (d, &p) in dst.iter_mut().zip(proj.iter()) {
                    *d = p as f32;
                }
            },
        );
    Cube::new(cube.rows, cube.cols, nc, data)
}

pub fn save_pca(pca: &PcaModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, pca.to_bytes())?;
    Ok(())
}

pub fn load_pca(path: impl AsRef<Path>) -> Result<PcaModel> {
    PcaModel::from_bytes(&fs::read(path)?)
}
