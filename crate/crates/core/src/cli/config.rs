use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::models::{SurgerySpec, VariantKind};
use crate::nn::Precision;
use crate::train::{DEFAULT_BATCH_SIZE, DEFAULT_SEED};

fn seed() -> u64 {
    DEFAULT_SEED
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSection {
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcaSection {
    #[serde(default = "default_components")]
    pub components: usize,
    #[serde(default)]
    pub standardize: bool,
    /// Where the fitted PCA model is written.
    pub checkpoint: PathBuf,
}

fn default_components() -> usize {
    30
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchSection {
    pub window: usize,
    #[serde(default)]
    pub stratified: bool,
    pub train_fraction: f64,
    #[serde(default = "seed")]
    pub seed: u64,
}

/// Named surgery preset or an explicit surgery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SurgeryChoice {
    Preset(VariantKind),
    Explicit(SurgerySpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub variant: Option<VariantKind>,
    /// Source checkpoint for transfer runs.
    pub checkpoint: Option<PathBuf>,
    pub surgery: Option<SurgeryChoice>,
    #[serde(default = "seed")]
    pub init_seed: u64,
    #[serde(default = "seed")]
    pub head_seed: u64,
    pub leaky_alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "seed")]
    pub seed: u64,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_precision")]
    pub precision: Precision,
    #[serde(default)]
    pub log_every: usize,
}

fn default_batch() -> usize {
    DEFAULT_BATCH_SIZE
}

fn default_lr() -> f64 {
    1e-3
}

fn default_precision() -> Precision {
    Precision::F32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
    pub map: Option<PathBuf>,
    #[serde(default = "mask_default")]
    pub map_mask: bool,
}

fn mask_default() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scene: SceneSection,
    pub pca: PcaSection,
    pub patches: PatchSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub outputs: OutputSection,
}

/// Parses `--a.b value` pairs and writes each value at its dotted path.
///
/// Values are read as JSON when they parse (`3`, `true`, `"x"`, `[1]`) and
/// as plain strings otherwise.
pub fn apply_overrides(doc: &mut Value, args: &[String]) -> Result<()> {
    let mut it = args.iter();
    while let Some(flag) = it.next() {
        let key = flag
            .strip_prefix("--")
            .filter(|k| !k.is_empty())
            .ok_or_else(|| Error::Config(format!("expected `--section.key value`, got `{flag}`")))?;
        let (key, raw) = match key.split_once('=') {
            Some((k, v)) => (k, v.to_string()),
            None => (key, it.next().ok_or_else(|| Error::Config(format!("missing value for `{flag}`")))?.clone()),
        };
        let value = serde_json::from_str(&raw).unwrap_or(Value::String(raw));
        let mut node = &mut *doc;
        let parts: Vec<&str> = key.split('.').collect();
        for (n, part) in parts.iter().enumerate() {
            let obj = node
                .as_object_mut()
                .ok_or_else(|| Error::Config(format!("`{key}`: `{part}` is inside a non-object value")))?;
            if n + 1 == parts.len() {
                obj.insert(part.to_string(), value.clone());
                break;
            }
            node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
        }
    }
    Ok(())
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    /// Reads a config file, applies overrides and resolves relative paths
    /// against the file's directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut doc: Value =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        apply_overrides(&mut doc, overrides)?;
        let mut cfg: RunConfig =
            serde_json::from_value(doc).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        resolve(base, &mut cfg.scene.path);
        resolve(base, &mut cfg.pca.checkpoint);
        resolve(base, &mut cfg.outputs.checkpoint);
        resolve(base, &mut cfg.outputs.metrics);
        if let Some(m) = &mut cfg.outputs.map {
            resolve(base, m);
        }
        if let Some(c) = &mut cfg.model.checkpoint {
            resolve(base, c);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.patches.train_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::Config(format!("patches.train_fraction must be in (0, 1), got {f}")));
        }
        if self.pca.components == 0 {
            return Err(Error::Config("pca.components must be positive".into()));
        }
        if !(self.train.lr > 0.0 && self.train.lr.is_finite()) {
            return Err(Error::Config(format!("train.lr must be positive, got {}", self.train.lr)));
        }
        Ok(())
    }
}
