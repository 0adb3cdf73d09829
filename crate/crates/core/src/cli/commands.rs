use std::path::Path;

use serde_json::{json, Value};

use super::config::{RunConfig, SurgeryChoice};
use super::{EvalArgs, MapArgs, SynthArgs};
use crate::error::{Error, Result};
use crate::models::{
    build_model, frozen_layers, mlp_transfer_surgery, transfer_surgery, ModelVariant,
};
use crate::nn::{
    checkpoint_from_bytes, checkpoint_precision, checkpoint_to_bytes, init_params, AdamConfig, Float, ModelSpec, Params,
    Precision,
};
use crate::prep::{
    apply_pca, extract_patches, fit_pca, flatten_patches, load_pca, save_pca, split_train_test, PatchSet, PcaModel,
    PcaOptions, SplitSpec,
};
use crate::scene::{generate_synthetic_scene, load_scene, save_scene, write_class_map, Scene, SynthSpec};
use crate::train::{evaluate, predict_map, train, History, Metrics, TrainConfig};

fn write_json(path: &Path, v: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        rows: a.rows,
        cols: a.cols,
        bands: a.bands,
        n_classes: a.classes,
        blob_count: a.blobs.unwrap_or(2 * a.classes),
        noise_sigma: a.noise,
        seed: a.seed,
    };
    let scene = generate_synthetic_scene(&spec)?;
    save_scene(&scene, &a.output)?;
    println!("{}", a.output.display());
    for (c, entry) in scene.class_table().classes.iter().enumerate() {
        println!("{:>3} {:<12} {}", c + 1, entry.name, entry.sample_count);
    }
    Ok(())
}

/// Window implied by a model input shape for `components` PCA channels.
pub fn model_window(spec: &ModelSpec, components: usize) -> Result<usize> {
    let s = &spec.input_shape;
    let mismatch = || Error::Dimension(format!("model input {s:?} does not fit {components} PCA components"));
    match s.len() {
        4 if s[1] == components && s[2] == s[3] => Ok(s[2]),
        1 if components > 0 && s[0].is_multiple_of(components) => {
            let area = s[0] / components;
            let w = (area as f64).sqrt().round() as usize;
            if w * w == area {
                Ok(w)
            } else {
                Err(mismatch())
            }
        }
        _ => Err(mismatch()),
    }
}

fn patches_for(spec: &ModelSpec, reduced: &crate::scene::Cube, scene: &Scene, window: usize) -> Result<PatchSet> {
    let p = extract_patches(reduced, &scene.labels, window, scene.n_classes())?;
    let p = if spec.input_shape.len() == 1 { flatten_patches(p) } else { p };
    if p.input_shape() != spec.input_shape {
        return Err(Error::Dimension(format!(
            "patches of shape {:?} do not fit model input {:?}",
            p.input_shape(),
            spec.input_shape
        )));
    }
    Ok(p)
}

struct Prepared {
    scene: Scene,
    pca: PcaModel,
    train: PatchSet,
    test: PatchSet,
}

fn prepare(cfg: &RunConfig, flat: bool) -> Result<Prepared> {
    let scene = load_scene(&cfg.scene.path)?;
    let pca = fit_pca(&scene.cube, cfg.pca.components, PcaOptions { standardize: cfg.pca.standardize })?;
    save_pca(&pca, &cfg.pca.checkpoint)?;
    let reduced = apply_pca(&scene.cube, &pca)?;
    let p = extract_patches(&reduced, &scene.labels, cfg.patches.window, scene.n_classes())?;
    let p = if flat { flatten_patches(p) } else { p };
    let split = SplitSpec {
        train_fraction: cfg.patches.train_fraction,
        seed: cfg.patches.seed,
        stratified: cfg.patches.stratified,
    };
    let (train, test) = split_train_test(&p, &split)?;
    log::info!("{}: {} training and {} test samples", scene.name, train.len(), test.len());
    Ok(Prepared { scene, pca, train, test })
}

fn train_config(cfg: &RunConfig) -> TrainConfig {
    TrainConfig {
        epochs: cfg.train.epochs,
        batch_size: cfg.train.batch_size,
        seed: cfg.train.seed,
        adam: AdamConfig { lr: cfg.train.lr, ..AdamConfig::default() },
        log_every: cfg.train.log_every,
    }
}

fn report(metrics: &Metrics, history: &History, extra: Value) -> Result<Value> {
    let mut v = serde_json::to_value(metrics)?;
    let obj = v.as_object_mut().expect("metrics serialize to an object");
    let epochs: Vec<Value> = history.epochs.iter().map(|e| json!({"loss": e.loss, "accuracy": e.accuracy})).collect();
    obj.insert("history".into(), Value::Array(epochs));
    if let Value::Object(extra) = extra {
        obj.extend(extra);
    }
    Ok(v)
}

fn finish<T: Float>(
    cfg: &RunConfig,
    prep: &Prepared,
    spec: &ModelSpec,
    params: &Params<T>,
    history: &History,
    extra: Value,
) -> Result<Metrics> {
    let metrics = evaluate(spec, params, &prep.test)?;
    std::fs::write(&cfg.outputs.checkpoint, checkpoint_to_bytes(spec, params)?)?;
    write_json(&cfg.outputs.metrics, &report(&metrics, history, extra)?)?;
    if let Some(path) = &cfg.outputs.map {
        let map = predict_map(spec, params, &prep.scene, &prep.pca, cfg.patches.window, cfg.outputs.map_mask)?;
        write_class_map(&map, path)?;
    }
    print!("{}", metrics.table(&prep.scene.class_names));
    let seconds: f64 = history.epochs.iter().map(|e| e.seconds).sum();
    println!("training wall time {seconds:.2} s");
    Ok(metrics)
}

fn run_train<T: Float>(cfg: &RunConfig, variant: ModelVariant) -> Result<()> {
    let prep = prepare(cfg, variant.kind.is_mlp())?;
    let spec = build_model(&variant)?;
    let mut params = init_params::<T>(&spec, cfg.model.init_seed)?;
    let counts = spec.count_params();
    println!("model {:?}: trainable {} frozen {}", variant.kind, counts.trainable, counts.frozen);
    let history = train(&spec, &mut params, &prep.train, &train_config(cfg))?;
    let extra = json!({
        "n_train": prep.train.len(),
        "n_test": prep.test.len(),
        "model": {"variant": variant.kind, "trainable": counts.trainable, "frozen": counts.frozen, "precision": T::PRECISION},
        "seeds": {"split": cfg.patches.seed, "init": cfg.model.init_seed, "train": cfg.train.seed},
    });
    finish(cfg, &prep, &spec, &params, &history, extra)?;
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let kind = cfg.model.variant.ok_or_else(|| Error::Config("model.variant is required for training".into()))?;
    let scene_classes = load_scene(&cfg.scene.path)?.n_classes();
    let mut variant = ModelVariant::new(kind, cfg.patches.window, cfg.pca.components, scene_classes);
    if let Some(alpha) = cfg.model.leaky_alpha {
        variant.leaky_alpha = alpha;
    }
    match cfg.train.precision {
        Precision::F32 => run_train::<f32>(cfg, variant),
        Precision::F64 => run_train::<f64>(cfg, variant),
    }
}

fn run_transfer<T: Float>(cfg: &RunConfig, bytes: &[u8]) -> Result<()> {
    let (src_spec, src_params) = checkpoint_from_bytes::<T>(bytes)?;
    let scene_classes = load_scene(&cfg.scene.path)?.n_classes();
    let surgery = match cfg.model.surgery.as_ref() {
        Some(SurgeryChoice::Preset(kind)) => mlp_transfer_surgery(*kind, &src_spec, scene_classes, cfg.model.head_seed)?,
        Some(SurgeryChoice::Explicit(s)) => s.clone(),
        None => return Err(Error::Config("model.surgery is required for transfer".into())),
    };
    let (spec, mut params) = transfer_surgery((&src_spec, &src_params), &surgery)?;
    if spec.n_classes != scene_classes {
        return Err(Error::Surgery {
            expected: format!("a head with {scene_classes} classes"),
            got: spec.n_classes.to_string(),
        });
    }
    let window = model_window(&spec, cfg.pca.components)?;
    if window != cfg.patches.window {
        return Err(Error::Dimension(format!(
            "source model expects window {window}, config asks for {}",
            cfg.patches.window
        )));
    }
    let trunk = frozen_layers(&spec);
    let before = src_params.checksum(trunk.iter().copied());
    let counts = spec.count_params();
    println!("transfer: trainable {} frozen {}", counts.trainable, counts.frozen);
    println!("trunk sha256 before {before}");

    let prep = prepare(cfg, spec.input_shape.len() == 1)?;
    let history = train(&spec, &mut params, &prep.train, &train_config(cfg))?;
    let after = params.checksum(trunk.iter().copied());
    println!("trunk sha256 after  {after}");
    if after != before {
        return Err(Error::Contract("frozen trunk changed during head training".into()));
    }
    let extra = json!({
        "n_train": prep.train.len(),
        "n_test": prep.test.len(),
        "model": {"trainable": counts.trainable, "frozen": counts.frozen, "precision": T::PRECISION, "surgery": surgery},
        "trunk_sha256": after,
        "seeds": {"split": cfg.patches.seed, "head": surgery.head_seed, "train": cfg.train.seed},
    });
    finish(cfg, &prep, &spec, &params, &history, extra)?;
    Ok(())
}

pub fn cmd_transfer(cfg: &RunConfig) -> Result<()> {
    let path = cfg
        .model
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::Config("model.checkpoint is required for transfer".into()))?;
    let bytes = std::fs::read(path)?;
    match checkpoint_precision(&bytes)? {
        Precision::F32 => run_transfer::<f32>(cfg, &bytes),
        Precision::F64 => run_transfer::<f64>(cfg, &bytes),
    }
}

fn eval_with<T: Float>(a: &EvalArgs, bytes: &[u8], pca: &PcaModel, scene: &Scene) -> Result<()> {
    let (spec, params) = checkpoint_from_bytes::<T>(bytes)?;
    let window = model_window(&spec, pca.n_components())?;
    let reduced = apply_pca(&scene.cube, pca)?;
    let all = patches_for(&spec, &reduced, scene, window)?;
    let set = match a.train_fraction {
        Some(f) => split_train_test(&all, &SplitSpec { train_fraction: f, seed: a.split_seed, stratified: a.stratified })?.1,
        None => all,
    };
    let metrics = evaluate(&spec, &params, &set)?;
    match &a.output {
        Some(path) => {
            write_json(path, &serde_json::to_value(&metrics)?)?;
            print!("{}", metrics.table(&scene.class_names));
        }
        None => println!("{}", serde_json::to_string_pretty(&metrics)?),
    }
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let bytes = std::fs::read(&a.checkpoint)?;
    let pca = load_pca(&a.pca)?;
    let scene = load_scene(&a.scene)?;
    match checkpoint_precision(&bytes)? {
        Precision::F32 => eval_with::<f32>(a, &bytes, &pca, &scene),
        Precision::F64 => eval_with::<f64>(a, &bytes, &pca, &scene),
    }
}

fn map_with<T: Float>(bytes: &[u8], pca: &PcaModel, scene: &Scene, mask: bool) -> Result<crate::scene::LabelMap> {
    let (spec, params) = checkpoint_from_bytes::<T>(bytes)?;
    let window = model_window(&spec, pca.n_components())?;
    predict_map(&spec, &params, scene, pca, window, mask)
}

pub fn cmd_map(a: &MapArgs) -> Result<()> {
    let scene = load_scene(&a.scene)?;
    let map = if a.truth {
        scene.labels.clone()
    } else {
        let (Some(ckpt), Some(pca)) = (&a.checkpoint, &a.pca) else {
            return Err(Error::Config("--checkpoint and --pca are required unless --truth is given".into()));
        };
        let bytes = std::fs::read(ckpt)?;
        let pca = load_pca(pca)?;
        match checkpoint_precision(&bytes)? {
            Precision::F32 => map_with::<f32>(&bytes, &pca, &scene, !a.no_mask)?,
            Precision::F64 => map_with::<f64>(&bytes, &pca, &scene, !a.no_mask)?,
        }
    };
    write_class_map(&map, &a.output)?;
    println!("{}", a.output.display());
    Ok(())
}
