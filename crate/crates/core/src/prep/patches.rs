use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{Cube, LabelMap};

/// How each sample is laid out in [`PatchSet::x`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// `[channel=1][band][row][col]`, the convolutional input.
    Cubes,
    /// `[row][col][band]` flattened, the MLP input.
    Flat,
}

/// Labeled samples cut out of a (reduced) scene.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    /// `len() * sample_len()` values.
    pub x: Vec<f32>,
    /// Class ids `1..=n_classes`.
    pub y: Vec<u16>,
    /// Center pixel `(row, col)` of every sample.
    pub positions: Vec<(usize, usize)>,
    pub window: usize,
    pub bands: usize,
    pub n_classes: usize,
    pub layout: Layout,
}

impl PatchSet {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn sample_len(&self) -> usize {
        self.window * self.window * self.bands
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let n = self.sample_len();
        &self.x[i * n..(i + 1) * n]
    }

    /// Per-sample tensor shape the models consume.
    pub fn input_shape(&self) -> Vec<usize> {
        match self.layout {
            Layout::Cubes => vec![1, self.bands, self.window, self.window],
            Layout::Flat => vec![self.sample_len()],
        }
    }

    /// Zero-based class targets.
    pub fn targets(&self) -> Vec<usize> {
        self.y.iter().map(|&l| usize::from(l) - 1).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> PatchSet {
        let n = self.sample_len();
        let mut x = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            x.extend_from_slice(self.sample(i));
        }
        PatchSet {
            x,
            y: indices.iter().map(|&i| self.y[i]).collect(),
            positions: indices.iter().map(|&i| self.positions[i]).collect(),
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> PatchSet {
        PatchSet {
            x: Vec::new(),
            y: Vec::new(),
            positions: Vec::new(),
            window: self.window,
            bands: self.bands,
            n_classes: self.n_classes,
            layout: self.layout,
        }
    }

    /// Support of every class `1..=n_classes`.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.y {
            counts[usize::from(l) - 1] += 1;
        }
        counts
    }
}

/// Writes the `window x window` neighborhood of `(row, col)` into `out`,
/// zero-filling positions that fall outside the image.
pub fn fill_patch(cube: &Cube, row: usize, col: usize, window: usize, layout: Layout, out: &mut [f32]) {
    let half = (window / 2) as isize;
    let bands = cube.bands;
    out.fill(0.0);
    for i in 0..window {
        let r = row as isize + i as isize - half;
        if r < 0 || r >= cube.rows as isize {
            continue;
        }
        for j in 0..window {
            let c = col as isize + j as isize - half;
            if c < 0 || c >= cube.cols as isize {
                continue;
            }
            let px = cube.pixel(r as usize, c as usize);
            match layout {
                Layout::Flat => {
                    let start = (i * window + j) * bands;
                    out[start..start + bands].copy_from_slice(px);
                }
                Layout::Cubes => {
                    for (b, &v) in px.iter().enumerate() {
                        out[(b * window + i) * window + j] = v;
                    }
                }
            }
        }
    }
}

/// One cube-layout sample per labeled pixel, in row-major scan order.
pub fn extract_patches(cube: &Cube, labels: &LabelMap, window: usize, n_classes: usize) -> Result<PatchSet> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::Config(format!("patch window must be odd and positive, got {window}")));
    }
    if labels.rows != cube.rows || labels.cols != cube.cols {
        return Err(Error::Dimension("label map and cube disagree in size".into()));
    }
    if let Some(&bad) = labels.data.iter().find(|&&l| usize::from(l) > n_classes) {
        return Err(Error::Label(format!("label {bad} exceeds {n_classes} classes")));
    }
    let sample_len = window * window * cube.bands;
    let count = labels.labeled_count();
    let mut x = vec![0.0f32; count * sample_len];
    let mut y = Vec::with_capacity(count);
    let mut positions = Vec::with_capacity(count);
    for r in 0..cube.rows {
        for c in 0..cube.cols {
            let l = labels.get(r, c);
            if l != 0 {
                let k = y.len();
                fill_patch(cube, r, c, window, Layout::Cubes, &mut x[k * sample_len..(k + 1) * sample_len]);
                y.push(l);
                positions.push((r, c));
            }
        }
    }
    Ok(PatchSet { x, y, positions, window, bands: cube.bands, n_classes, layout: Layout::Cubes })
}

/// Reorders each cube sample to `[row][col][band]`; flat input is returned as is.
pub fn flatten_patches(p: PatchSet) -> PatchSet {
    if p.layout == Layout::Flat {
        return p;
    }
    let (w, bands) = (p.window, p.bands);
    let n = p.sample_len();
    let mut x = vec![0.0f32; p.x.len()];
    for (src, dst) in p.x.chunks_exact(n.max(1)).zip(x.chunks_exact_mut(n.max(1))) {
        for b in 0..bands {
            for i in 0..w {
                for j in 0..w {
                    dst[(i * w + j) * bands + b] = src[(b * w + i) * w + j];
                }
            }
        }
    }
    PatchSet { x, layout: Layout::Flat, ..p }
}
