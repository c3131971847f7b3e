//! Model manifests: a JSON description of the layer graph plus a headerless
//! little-endian weight blob.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::snn::{LayerSpec, QuantizedWeights, SnnModel, WeightStore};
use crate::tensor::Shape;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightDtype {
    #[serde(rename = "int8")]
    Int8,
    /// Two values per byte, low nibble first, two's complement.
    #[serde(rename = "int4-packed")]
    Int4Packed,
}

impl WeightDtype {
    fn bytes_for(self, values: usize) -> usize {
        match self {
            WeightDtype::Int8 => values,
            WeightDtype::Int4Packed => values.div_ceil(2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub bits: u8,
    /// Dequantization factor, `w = scale * q`.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDescription {
    pub input_shape: Shape,
    pub timesteps: usize,
    pub num_classes: usize,
    pub layers: Vec<serde_json::Value>,
}

/// On-disk manifest. Weight tensors are stored in the blob back to back in
/// the order of `weights`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelManifest {
    pub format_version: u32,
    pub weight_blob: PathBuf,
    pub weight_dtype: WeightDtype,
    pub model: ModelDescription,
    pub weights: Vec<WeightEntry>,
}

fn encode_blob(weights: &WeightStore, dtype: WeightDtype) -> Vec<u8> {
    let mut blob = Vec::new();
    for w in weights.values() {
        match dtype {
            WeightDtype::Int8 => blob.extend(w.q.iter().map(|&v| v as u8)),
            WeightDtype::Int4Packed => blob.extend(
                w.q.chunks(2)
                    .map(|p| (p[0] as u8 & 0x0f) | ((*p.get(1).unwrap_or(&0) as u8 & 0x0f) << 4)),
            ),
        }
    }
    blob
}

fn decode_values(bytes: &[u8], count: usize, dtype: WeightDtype) -> Vec<i8> {
    match dtype {
        WeightDtype::Int8 => bytes.iter().map(|&b| b as i8).collect(),
        WeightDtype::Int4Packed => bytes
            .iter()
            .flat_map(|&b| [b & 0x0f, b >> 4])
            .map(|n| ((n << 4) as i8) >> 4)
            .take(count)
            .collect(),
    }
}

fn blob_path(manifest_path: &Path) -> PathBuf {
    manifest_path.with_extension("bin")
}

/// Builds the manifest and blob bytes for a model.
pub fn encode_model(model: &SnnModel, blob_name: impl Into<PathBuf>) -> Result<(ModelManifest, Vec<u8>)> {
    if model.layers.is_empty() {
        return Err(Error::InvalidModel("model has no layers".into()));
    }
    model.validate()?;
    let dtype = if model.weights.values().all(|w| w.bits == 4) {
        WeightDtype::Int4Packed
    } else {
        WeightDtype::Int8
    };
    let layers = model
        .layers
        .iter()
        .map(serde_json::to_value)
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let manifest = ModelManifest {
        format_version: MANIFEST_VERSION,
        weight_blob: blob_name.into(),
        weight_dtype: dtype,
        model: ModelDescription {
            input_shape: model.input_shape.clone(),
            timesteps: model.timesteps,
            num_classes: model.num_classes,
            layers,
        },
        weights: model
            .weights
            .iter()
            .map(|(name, w)| WeightEntry {
                name: name.clone(),
                rows: w.rows,
                cols: w.cols,
                bits: w.bits,
                scale: w.scale,
            })
            .collect(),
    };
    Ok((manifest, encode_blob(&model.weights, dtype)))
}

/// Rebuilds a model from a parsed manifest and its blob.
pub fn decode_model(manifest: &ModelManifest, blob: &[u8]) -> Result<SnnModel> {
    if manifest.format_version != MANIFEST_VERSION {
        return Err(Error::Format(format!(
            "manifest format_version {} unsupported (expected {MANIFEST_VERSION})",
            manifest.format_version
        )));
    }
    let dtype = manifest.weight_dtype;
    let expected: usize = manifest.weights.iter().map(|e| dtype.bytes_for(e.rows * e.cols)).sum();
    if blob.len() != expected {
        return Err(Error::Format(format!(
            "weight blob has {} bytes, manifest declares {expected}",
            blob.len()
        )));
    }
    let mut weights = WeightStore::new();
    let mut offset = 0;
    for e in &manifest.weights {
        if dtype == WeightDtype::Int4Packed && e.bits != 4 {
            return Err(Error::Format(format!(
                "weight '{}' is {}-bit but the blob is int4-packed",
                e.name, e.bits
            )));
        }
        let count = e.rows * e.cols;
        let len = dtype.bytes_for(count);
        let q = decode_values(&blob[offset..offset + len], count, dtype);
        offset += len;
        let w = QuantizedWeights::new(e.rows, e.cols, e.bits, e.scale, q)
            .map_err(|err| Error::Format(format!("weight '{}': {err}", e.name)))?;
        if weights.insert(e.name.clone(), w).is_some() {
            return Err(Error::Format(format!("weight '{}' declared twice", e.name)));
        }
    }
    let layers = manifest
        .model
        .layers
        .iter()
        .enumerate()
        .map(|(i, v)| {
            LayerSpec::deserialize(v).map_err(|e| Error::Format(e.to_string()).at_layer(i))
        })
        .collect::<Result<Vec<_>>>()?;
    if layers.is_empty() {
        return Err(Error::InvalidModel("model has no layers".into()));
    }
    let model = SnnModel {
        layers,
        input_shape: manifest.model.input_shape.clone(),
        timesteps: manifest.model.timesteps,
        num_classes: manifest.model.num_classes,
        weights,
    };
    model.validate()?;
    Ok(model)
}

/// Writes `path` (manifest) and a sibling `.bin` blob. Output bytes depend
/// only on the model.
pub fn save_model(model: &SnnModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let blob_file = blob_path(path);
    let blob_name = blob_file
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("bad manifest path {}", path.display())))?;
    let (manifest, blob) = encode_model(model, blob_name)?;
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&blob_file, blob)?;
    fs::write(path, text)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SnnModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::load(path, e.to_string()))?;
    let manifest: ModelManifest =
        serde_json::from_str(&text).map_err(|e| Error::load(path, e.to_string()))?;
    let blob_file = path.parent().unwrap_or(Path::new(".")).join(&manifest.weight_blob);
    let blob = fs::read(&blob_file)
        .map_err(|e| Error::load(&blob_file, format!("cannot read weight blob: {e}")))?;
    decode_model(&manifest, &blob).map_err(|e| match e {
        Error::Format(m) => Error::load(path, m),
        Error::Layer { layer, source } => match *source {
            Error::Format(m) => Error::load(path, format!("layer {layer}: {m}")),
            other => other.at_layer(layer),
        },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snn::NeuronParams;

    fn model(bits: u8) -> SnnModel {
        let n = NeuronParams::new(0.5, 1.0).unwrap();
        let hidden = LayerSpec::fully_connected(Shape::new(vec![5]), 3)
            .with_weights("a", bits)
            .with_neuron(n);
        let head = LayerSpec::fully_connected(Shape::new(vec![3]), 2).with_weights("b", bits);
        let qmax = if bits == 4 { 7 } else { 127 };
        let mut weights = WeightStore::new();
        weights.insert(
            "a".into(),
            QuantizedWeights::new(3, 5, bits, 0.1, (0..15).map(|i| ((i * 5) % (2 * qmax + 1) - qmax) as i8).collect())
                .unwrap(),
        );
        weights.insert("b".into(), QuantizedWeights::new(2, 3, bits, 0.25, vec![-qmax as i8, 0, 1, 2, -1, qmax as i8]).unwrap());
        SnnModel {
            layers: vec![hidden, head],
            input_shape: Shape::new(vec![5]),
            timesteps: 2,
            num_classes: 2,
            weights,
        }
    }

    #[test]
    fn roundtrip_int8_and_int4() {
        for bits in [8, 4] {
            let m = model(bits);
            let (manifest, blob) = encode_model(&m, "m.bin").unwrap();
            assert_eq!(
                manifest.weight_dtype,
                if bits == 4 { WeightDtype::Int4Packed } else { WeightDtype::Int8 }
            );
            assert_eq!(decode_model(&manifest, &blob).unwrap(), m);
        }
    }

    #[test]
    fn int4_packing_is_low_nibble_first() {
        let mut weights = WeightStore::new();
        weights.insert("x".into(), QuantizedWeights::new(1, 3, 4, 1.0, vec![-1, 7, -7]).unwrap());
        assert_eq!(encode_blob(&weights, WeightDtype::Int4Packed), vec![0x7f, 0x09]);
        assert_eq!(decode_values(&[0x7f, 0x09], 3, WeightDtype::Int4Packed), vec![-1, 7, -7]);
    }

    #[test]
    fn truncated_blob_names_sizes() {
        let (manifest, mut blob) = encode_model(&model(8), "m.bin").unwrap();
        blob.pop();
        let err = decode_model(&manifest, &blob).unwrap_err().to_string();
        assert!(err.contains("20 bytes") && err.contains("21"), "{err}");
    }

    #[test]
    fn unknown_layer_kind_reports_index() {
        let (mut manifest, blob) = encode_model(&model(8), "m.bin").unwrap();
        manifest.model.layers[1]["kind"] = "lstm".into();
        match decode_model(&manifest, &blob).unwrap_err() {
            Error::Layer { layer, .. } => assert_eq!(layer, 1),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn version_is_checked() {
        let (mut manifest, blob) = encode_model(&model(8), "m.bin").unwrap();
        manifest.format_version = 2;
        assert!(matches!(decode_model(&manifest, &blob), Err(Error::Format(_))));
    }

    #[test]
    fn empty_model_rejected() {
        let mut m = model(8);
        m.layers.clear();
        assert!(encode_model(&m, "m.bin").is_err());
    }

    #[test]
    fn saves_are_deterministic_and_canonical() {
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.json"), dir.path().join("b.json"));
        let m = model(8);
        save_model(&m, &p1).unwrap();
        save_model(&m, &p2).unwrap();
        assert_eq!(fs::read(p1.with_extension("bin")).unwrap(), fs::read(p2.with_extension("bin")).unwrap());
        let text = fs::read_to_string(&p1).unwrap();
        assert_eq!(load_model(&p1).unwrap(), m);

        // A hand-written manifest with shuffled keys re-saves canonically.
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let obj = v.as_object().unwrap();
        let mut keys: Vec<_> = obj.keys().cloned().collect();
        keys.reverse();
        let shuffled = format!(
            "{{{}}}",
            keys.iter()
                .map(|k| format!("{:?}:{}", k, obj[k]))
                .collect::<Vec<_>>()
                .join(",")
        );
        let p3 = dir.path().join("c.json");
        fs::write(&p3, shuffled.replace("a.bin", "c.bin")).unwrap();
        fs::copy(p1.with_extension("bin"), p3.with_extension("bin")).unwrap();
        let loaded = load_model(&p3).unwrap();
        save_model(&loaded, &p3).unwrap();
        assert_eq!(fs::read_to_string(&p3).unwrap(), text.replace("a.bin", "c.bin"));
    }

    #[test]
    fn missing_blob_is_a_load_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        save_model(&model(8), &p).unwrap();
        fs::remove_file(p.with_extension("bin")).unwrap();
        assert!(matches!(load_model(&p), Err(Error::Load { .. })));
    }
}
