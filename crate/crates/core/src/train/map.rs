use super::argmax;
use crate::error::{Error, Result};
use crate::nn::{predict_proba, Float, ModelSpec, Params, Tensor};
use crate::prep::{apply_pca, fill_patch, Layout, PcaModel};
use crate::scene::{Cube, LabelMap, Scene};

const MAP_BATCH: usize = 512;

fn layout_for(spec: &ModelSpec, window: usize, bands: usize) -> Result<Layout> {
    let (layout, expected) = match spec.input_shape.len() {
        4 => (Layout::Cubes, vec![1, bands, window, window]),
        _ => (Layout::Flat, vec![window * window * bands]),
    };
    if spec.input_shape != expected {
        return Err(Error::Dimension(format!(
            "window {window} with {bands} components gives input {expected:?}, model expects {:?}",
            spec.input_shape
        )));
    }
    Ok(layout)
}

/// Class ids `1..=K` for the given pixels of an already reduced cube.
pub fn predict_pixels<T: Float>(
    spec: &ModelSpec,
    params: &Params<T>,
    reduced: &Cube,
    window: usize,
    pixels: &[(usize, usize)],
) -> Result<Vec<u16>> {
    let layout = layout_for(spec, window, reduced.bands)?;
    let per = spec.input_len();
    let mut shape = vec![0];
    shape.extend(&spec.input_shape);
    let mut patch = vec![0.0f32; per];
    let mut out = Vec::with_capacity(pixels.len());
    for chunk in pixels.chunks(MAP_BATCH) {
        let mut data = Vec::with_capacity(chunk.len() * per);
        for &(r, c) in chunk {
            fill_patch(reduced, r, c, window, layout, &mut patch);
            data.extend(patch.iter().map(|&v| T::from_f64(v as f64)));
        }
        shape[0] = chunk.len();
        let probs = predict_proba(spec, params, &Tensor::new(shape.clone(), data)?)?;
        out.extend(probs.data().chunks(spec.n_classes).map(|row| argmax(row) as u16 + 1));
    }
    Ok(out)
}

/// Classifies every pixel of `scene`. With `mask`, pixels unlabeled in the
/// ground truth are set to 0.
pub fn predict_map<T: Float>(
    spec: &ModelSpec,
    params: &Params<T>,
    scene: &Scene,
    pca: &PcaModel,
    window: usize,
    mask: bool,
) -> Result<LabelMap> {
    let reduced = apply_pca(&scene.cube, pca)?;
    layout_for(spec, window, reduced.bands)?;
    let (rows, cols) = (scene.rows(), scene.cols());
    let pixels: Vec<(usize, usize)> = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .filter(|&(r, c)| !mask || scene.labels.get(r, c) != 0)
        .collect();
    let classes = predict_pixels(spec, params, &reduced, window, &pixels)?;
    let mut map = LabelMap::zeros(rows, cols);
    for (&(r, c), &k) in pixels.iter().zip(&classes) {
        map.data[r * cols + c] = k;
    }
    Ok(map)
}
