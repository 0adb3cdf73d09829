//! Hyperspectral scene container, the HSC1 file format, synthetic scenes and
//! class-map rendering.
//!
//! HSC1 layout (all integers little-endian):
//!
//! ```text
//! "HSC1" | u32 header_len | header_len bytes of JSON
//!        | rows*cols*bands f32 in [row][col][band] order
//!        | rows*cols u16 labels in [row][col] order
//! ```
//!
//! The JSON header is `{"name","rows","cols","bands","class_names"}`.

mod palette;
pub mod reference;
mod synth;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use palette::{encode_ppm, palette_color, write_class_map};
pub use synth::{generate_synthetic_scene, SynthSpec};

pub const SCENE_MAGIC: &[u8; 4] = b"HSC1";

/// Dense `rows x cols x bands` image cube stored in `[row][col][band]` order.
#[derive(Debug, Clone, PartialEq)]
pub struct Cube {
    pub rows: usize,
    pub cols: usize,
    pub bands: usize,
    pub data: Vec<f32>,
}

impl Cube {
    pub fn new(rows: usize, cols: usize, bands: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols * bands {
            return Err(Error::Dimension(format!(
                "cube data has {} values, expected {rows}x{cols}x{bands}",
                data.len()
            )));
        }
        Ok(Cube { rows, cols, bands, data })
    }

    pub fn zeros(rows: usize, cols: usize, bands: usize) -> Self {
        Cube { rows, cols, bands, data: vec![0.0; rows * cols * bands] }
    }

    /// Spectrum of one pixel.
    pub fn pixel(&self, row: usize, col: usize) -> &[f32] {
        let start = (row * self.cols + col) * self.bands;
        &self.data[start..start + self.bands]
    }

    pub fn pixel_count(&self) -> usize {
        self.rows * self.cols
    }
}

/// Per-pixel class ids, row-major. Zero means unlabeled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<u16>,
}

impl LabelMap {
    pub fn new(rows: usize, cols: usize, data: Vec<u16>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "label map has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(LabelMap { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        LabelMap { rows, cols, data: vec![0; rows * cols] }
    }

    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.data[row * self.cols + col]
    }

    pub fn labeled_count(&self) -> usize {
        self.data.iter().filter(|&&l| l != 0).count()
    }
}

/// One row of a scene's ground-truth class table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClassEntry {
    pub name: String,
    pub sample_count: usize,
}

/// Class names paired with the number of pixels carrying each label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClassTable {
    pub classes: Vec<ClassEntry>,
}

impl ClassTable {
    pub fn total(&self) -> usize {
        self.classes.iter().map(|c| c.sample_count).sum()
    }
}

/// A hyperspectral scene: reflectance cube, ground-truth labels and class names.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub name: String,
    pub cube: Cube,
    pub labels: LabelMap,
    /// Names of classes `1..=K`; index 0 of this list is class 1.
    pub class_names: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct SceneHeader {
    name: String,
    rows: usize,
    cols: usize,
    bands: usize,
    class_names: Vec<String>,
}

impl Scene {
    pub fn new(name: impl Into<String>, cube: Cube, labels: LabelMap, class_names: Vec<String>) -> Result<Self> {
        let scene = Scene { name: name.into(), cube, labels, class_names };
        scene.validate()?;
        Ok(scene)
    }

    pub fn rows(&self) -> usize {
        self.cube.rows
    }

    pub fn cols(&self) -> usize {
        self.cube.cols
    }

    pub fn bands(&self) -> usize {
        self.cube.bands
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.cube;
        if c.rows == 0 || c.cols == 0 || c.bands == 0 {
            return Err(Error::Validation("scene dimensions must be positive".into()));
        }
        if c.data.len() != c.rows * c.cols * c.bands {
            return Err(Error::Validation("cube length does not match dimensions".into()));
        }
        if self.labels.rows != c.rows || self.labels.cols != c.cols {
            return Err(Error::Validation(format!(
                "labels are {}x{} but cube is {}x{}",
                self.labels.rows, self.labels.cols, c.rows, c.cols
            )));
        }
        if self.labels.data.len() != c.rows * c.cols {
            return Err(Error::Validation("label length does not match dimensions".into()));
        }
        if let Some(i) = c.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite cube value at flat index {i}")));
        }
        let k = self.class_names.len();
        if let Some(&bad) = self.labels.data.iter().find(|&&l| usize::from(l) > k) {
            return Err(Error::Validation(format!(
                "label {bad} exceeds the {k} declared class names"
            )));
        }
        Ok(())
    }

    /// Pixel count per class `1..=K`.
    pub fn class_table(&self) -> ClassTable {
        let mut counts = vec![0usize; self.class_names.len()];
        for &l in &self.labels.data {
            if l != 0 {
                counts[usize::from(l) - 1] += 1;
            }
        }
        ClassTable {
            classes: self
                .class_names
                .iter()
                .zip(counts)
                .map(|(name, sample_count)| ClassEntry { name: name.clone(), sample_count })
                .collect(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let header = serde_json::to_vec(&SceneHeader {
            name: self.name.clone(),
            rows: self.rows(),
            cols: self.cols(),
            bands: self.bands(),
            class_names: self.class_names.clone(),
        })?;
        let mut out =
            Vec::with_capacity(8 + header.len() + 4 * self.cube.data.len() + 2 * self.labels.data.len());
        out.extend_from_slice(SCENE_MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for v in &self.cube.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for l in &self.labels.data {
            out.extend_from_slice(&l.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != SCENE_MAGIC {
            return Err(Error::Format("missing HSC1 magic".into()));
        }
        if bytes.len() < 8 {
            return Err(Error::Length { expected: 8, got: bytes.len() });
        }
        let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let header_end = 8 + header_len;
        if bytes.len() < header_end {
            return Err(Error::Length { expected: header_end, got: bytes.len() });
        }
        let header: SceneHeader = serde_json::from_slice(&bytes[8..header_end])?;
        let n_pix = header
            .rows
            .checked_mul(header.cols)
            .ok_or_else(|| Error::Format("scene dimensions overflow".into()))?;
        let n_vals = n_pix
            .checked_mul(header.bands)
            .ok_or_else(|| Error::Format("scene dimensions overflow".into()))?;
        let expected = header_end + 4 * n_vals + 2 * n_pix;
        if bytes.len() != expected {
            return Err(Error::Length { expected, got: bytes.len() });
        }
        let cube_bytes = &bytes[header_end..header_end + 4 * n_vals];
        let data = cube_bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let labels = bytes[header_end + 4 * n_vals..]
            .chunks_exact(2)
            .map(|b| u16::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Scene::new(
            header.name,
            Cube::new(header.rows, header.cols, header.bands, data)?,
            LabelMap::new(header.rows, header.cols, labels)?,
            header.class_names,
        )
    }
}

pub fn save_scene(scene: &Scene, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, scene.to_bytes()?)?;
    Ok(())
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<Scene> {
    Scene::from_bytes(&fs::read(path)?)
}
