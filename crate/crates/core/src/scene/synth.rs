use serde::{Deserialize, Serialize};

use super::{Cube, LabelMap, Scene};
use crate::error::{Error, Result};
use crate::rng::Pcg32;

/// Parameters of a desk-scale synthetic scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub rows: usize,
    pub cols: usize,
    pub bands: usize,
    pub n_classes: usize,
    pub blob_count: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::Config("synthetic scenes need at least 2 classes".into()));
        }
        if self.bands < 2 {
            return Err(Error::Config("synthetic scenes need at least 2 bands".into()));
        }
        if self.n_classes > usize::from(u16::MAX) {
            return Err(Error::Config("too many classes".into()));
        }
        if self.n_classes > self.blob_count {
            return Err(Error::Config(format!(
                "{} classes cannot be covered by {} blobs",
                self.n_classes, self.blob_count
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config("noise_sigma must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

/// Mean spectrum of class `class` (0 = background): a flat baseline plus one
/// Gaussian bump whose center moves evenly across the band axis with the class.
pub fn class_spectrum(class: usize, n_classes: usize, bands: usize) -> Vec<f64> {
    const BASELINE: f64 = 0.1;
    if class == 0 {
        return vec![BASELINE; bands];
    }
    let span = (bands - 1) as f64;
    let center = (class as f64 - 0.5) / n_classes as f64 * span;
    let width = (span / (2.0 * n_classes as f64)).max(0.75);
    (0..bands)
        .map(|b| {
            let z = (b as f64 - center) / width;
            BASELINE + 0.8 * (-0.5 * z * z).exp()
        })
        .collect()
}

/// Builds a scene of axis-aligned rectangular blobs on an unlabeled background.
///
/// The image is tiled into a near-square grid with one cell per blob and each
/// blob is placed inside its own cell, so blobs never overlap and every class
/// (assigned round-robin) keeps its pixels.
pub fn generate_synthetic_scene(spec: &SynthSpec) -> Result<Scene> {
    spec.validate()?;
    let grid_cols = (spec.blob_count as f64).sqrt().ceil() as usize;
    let grid_rows = spec.blob_count.div_ceil(grid_cols);
    let cell_h = spec.rows / grid_rows;
    let cell_w = spec.cols / grid_cols;
    if cell_h == 0 || cell_w == 0 {
        return Err(Error::Config(format!(
            "{}x{} image is too small for {} blobs",
            spec.rows, spec.cols, spec.blob_count
        )));
    }

    let mut rng = Pcg32::seeded(spec.seed);
    let mut labels = LabelMap::zeros(spec.rows, spec.cols);
    for blob in 0..spec.blob_count {
        let (gr, gc) = (blob / grid_cols, blob % grid_cols);
        let h = extent(&mut rng, cell_h);
        let w = extent(&mut rng, cell_w);
        let top = gr * cell_h + rng.bounded((cell_h - h + 1) as u32) as usize;
        let left = gc * cell_w + rng.bounded((cell_w - w + 1) as u32) as usize;
        let class = (blob % spec.n_classes + 1) as u16;
        for r in top..top + h {
            for c in left..left + w {
                labels.data[r * spec.cols + c] = class;
            }
        }
    }

    let spectra: Vec<Vec<f64>> = (0..=spec.n_classes)
        .map(|c| class_spectrum(c, spec.n_classes, spec.bands))
        .collect();
    let mut data = Vec::with_capacity(spec.rows * spec.cols * spec.bands);
    for &label in &labels.data {
        for &mean in &spectra[usize::from(label)] {
            let noise = rng.normal() * spec.noise_sigma;
            data.push((mean + noise) as f32);
        }
    }

    Scene::new(
        format!("synthetic-{}", spec.seed),
        Cube::new(spec.rows, spec.cols, spec.bands, data)?,
        labels,
        (1..=spec.n_classes).map(|c| format!("class_{c}")).collect(),
    )
}

/// Blob side length between half and all of the cell.
fn extent(rng: &mut Pcg32, cell: usize) -> usize {
    let lo = (cell / 2).max(1);
    lo + rng.bounded((cell - lo + 1) as u32) as usize
}
