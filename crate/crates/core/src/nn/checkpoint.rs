//! `HSCKPT1` container: magic, u32 LE header length, JSON header with the
//! model spec and a tensor directory, then the tensor payloads in directory
//! order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::expected_shapes;
use super::{Float, LayerParams, LayerSpec, ModelSpec, Params, Precision, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 7] = b"HSCKPT1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    dtype: Precision,
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    spec: ModelSpec,
    tensors: Vec<Entry>,
}

pub fn checkpoint_to_bytes<T: Float>(spec: &ModelSpec, params: &Params<T>) -> Result<Vec<u8>> {
    params.check(spec)?;
    let mut tensors = Vec::new();
    let mut offset = 0;
    for (name, t) in params.named_tensors() {
        tensors.push(Entry { name, shape: t.shape().to_vec(), dtype: T::PRECISION, offset });
        offset += t.len() * T::PRECISION.size();
    }
    let header = serde_json::to_vec(&Header { spec: spec.clone(), tensors })?;
    let mut out = Vec::with_capacity(CHECKPOINT_MAGIC.len() + 4 + header.len() + offset);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for (_, t) in params.named_tensors() {
        out.extend_from_slice(&t.to_le_bytes());
    }
    Ok(out)
}

fn split_header(bytes: &[u8]) -> Result<(Header, usize)> {
    let m = CHECKPOINT_MAGIC.len();
    if bytes.len() < m + 4 || &bytes[..m] != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a model checkpoint (bad magic)".into()));
    }
    let hlen = u32::from_le_bytes(bytes[m..m + 4].try_into().unwrap()) as usize;
    let body = m + 4 + hlen;
    if bytes.len() < body {
        return Err(Error::Length { expected: body, got: bytes.len() });
    }
    Ok((serde_json::from_slice(&bytes[m + 4..body])?, body))
}

/// Storage precision of a checkpoint's tensors (`f32` when it has none).
pub fn checkpoint_precision(bytes: &[u8]) -> Result<Precision> {
    let (header, _) = split_header(bytes)?;
    Ok(header.tensors.first().map_or(Precision::F32, |e| e.dtype))
}

/// Parses a checkpoint, converting stored tensors to `T` if the stored dtype differs.
pub fn checkpoint_from_bytes<T: Float>(bytes: &[u8]) -> Result<(ModelSpec, Params<T>)> {
    let (header, body) = split_header(bytes)?;
    let spec = header.spec;
    spec.validate()?;
    let payload = &bytes[body..];

    let mut entries = header.tensors.iter();
    let mut expected_offset = 0;
    let mut layers = Vec::with_capacity(spec.layers.len());
    for (i, layer) in spec.layers.iter().enumerate() {
        let shapes = expected_shapes(&layer.spec);
        let mut ts = Vec::with_capacity(shapes.len());
        for shape in shapes {
            let e = entries
                .next()
                .ok_or_else(|| Error::Shape(format!("tensor directory ends before layer {i}")))?;
            if e.shape != shape {
                return Err(Error::Shape(format!("{}: stored shape {:?}, model needs {:?}", e.name, e.shape, shape)));
            }
            if e.offset != expected_offset {
                return Err(Error::Format(format!("{}: offset {} out of order", e.name, e.offset)));
            }
            let n: usize = shape.iter().product();
            let size = e.dtype.size();
            let end = e.offset + n * size;
            if payload.len() < end {
                return Err(Error::Length { expected: body + end, got: bytes.len() });
            }
            let raw = &payload[e.offset..end];
            let data: Vec<T> = match e.dtype {
                Precision::F32 => raw.chunks_exact(size).map(|c| T::from_f64(f32::read_le(c) as f64)).collect(),
                Precision::F64 => raw.chunks_exact(size).map(|c| T::from_f64(f64::read_le(c))).collect(),
            };
            ts.push(Tensor::new(shape, data)?);
            expected_offset = end;
        }
        let mut it = ts.into_iter();
        layers.push(match layer.spec {
            LayerSpec::Dense { .. } | LayerSpec::Conv3d { .. } | LayerSpec::Conv2d { .. } => {
                LayerParams::Affine { weight: it.next().unwrap(), bias: it.next().unwrap() }
            }
            LayerSpec::BatchNorm { .. } => LayerParams::Norm {
                gamma: it.next().unwrap(),
                beta: it.next().unwrap(),
                running_mean: it.next().unwrap(),
                running_var: it.next().unwrap(),
            },
            _ => LayerParams::None,
        });
    }
    if entries.next().is_some() {
        return Err(Error::Shape("tensor directory has entries the model does not use".into()));
    }
    if payload.len() != expected_offset {
        return Err(Error::Length { expected: body + expected_offset, got: bytes.len() });
    }
    Ok((spec, Params::new(layers)))
}

pub fn save_checkpoint<T: Float>(spec: &ModelSpec, params: &Params<T>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, checkpoint_to_bytes(spec, params)?)?;
    Ok(())
}

pub fn load_checkpoint<T: Float>(path: impl AsRef<Path>) -> Result<(ModelSpec, Params<T>)> {
    checkpoint_from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::init_params;

    fn spec() -> ModelSpec {
        ModelSpec::new(
            vec![4],
            2,
            vec![
                LayerSpec::dense(4, 3),
                LayerSpec::batch_norm(3),
                LayerSpec::relu(),
                LayerSpec::dense(3, 2),
                LayerSpec::softmax(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn round_trip() {
        let s = spec();
        let p = init_params::<f32>(&s, 9).unwrap();
        let bytes = checkpoint_to_bytes(&s, &p).unwrap();
        let (s2, p2) = checkpoint_from_bytes::<f32>(&bytes).unwrap();
        assert_eq!(s, s2);
        assert_eq!(p.layers, p2.layers);
        assert_eq!(checkpoint_to_bytes(&s2, &p2).unwrap(), bytes);
    }

    #[test]
    fn dtype_conversion() {
        let s = spec();
        let p = init_params::<f32>(&s, 9).unwrap();
        let bytes = checkpoint_to_bytes(&s, &p).unwrap();
        let (_, p64) = checkpoint_from_bytes::<f64>(&bytes).unwrap();
        assert_eq!(p64.cast::<f32>().layers, p.layers);
    }

    #[test]
    fn tampered_shape() {
        let s = spec();
        let p = init_params::<f32>(&s, 9).unwrap();
        let bytes = checkpoint_to_bytes(&s, &p).unwrap();
        let text = String::from_utf8_lossy(&bytes).into_owned();
        let needle = "\"shape\":[4,3]";
        let at = text.find(needle).unwrap();
        let mut bad = bytes.clone();
        bad[at + needle.len() - 2] = b'2';
        assert!(matches!(checkpoint_from_bytes::<f32>(&bad), Err(Error::Shape(_))));
    }

    #[test]
    fn bad_magic_and_truncation() {
        let s = spec();
        let p = init_params::<f64>(&s, 1).unwrap();
        let mut bytes = checkpoint_to_bytes(&s, &p).unwrap();
        assert!(matches!(checkpoint_from_bytes::<f64>(&bytes[..bytes.len() - 1]), Err(Error::Length { .. })));
        bytes[0] = b'X';
        assert!(matches!(checkpoint_from_bytes::<f64>(&bytes), Err(Error::Format(_))));
    }
}
