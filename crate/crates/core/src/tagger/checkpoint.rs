//! Tagger checkpoints: a self-describing JSON container with the full
//! hyperparameter configuration (including the training seed), the
//! character vocabulary and every named parameter array. Values round-trip
//! bit-exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CharVocab, TaggerConfig, TaggerModel};
use crate::error::{Error, Result};

const FORMAT: &str = "telediar-tagger-v1";

#[derive(Debug, Serialize, Deserialize)]
struct NamedArray {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    config: TaggerConfig,
    vocab: String,
    params: Vec<NamedArray>,
}

fn to_checkpoint(model: &TaggerModel) -> Checkpoint {
    Checkpoint {
        format: FORMAT.into(),
        config: model.config.clone(),
        vocab: model.vocab.chars().iter().collect(),
        params: model
            .params()
            .into_iter()
            .map(|p| NamedArray {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                values: p.value.iter().copied().collect(),
            })
            .collect(),
    }
}

fn from_checkpoint(ckpt: Checkpoint) -> Result<TaggerModel> {
    if ckpt.format != FORMAT {
        return Err(Error::Validation(format!(
            "unsupported checkpoint format {:?}",
            ckpt.format
        )));
    }
    ckpt.config.validate()?;
    let vocab = CharVocab::from_chars(ckpt.vocab.chars().collect());
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    use rand::SeedableRng;
    let mut model = TaggerModel::init(ckpt.config, vocab, &mut rng)?;
    {
        let mut params = model.params_mut();
        if params.len() != ckpt.params.len() {
            return Err(Error::Validation(format!(
                "checkpoint has {} parameter arrays, model needs {}",
                ckpt.params.len(),
                params.len()
            )));
        }
        for (p, saved) in params.iter_mut().zip(ckpt.params) {
            if p.name != saved.name || p.value.shape() != saved.shape.as_slice() {
                return Err(Error::Validation(format!(
                    "checkpoint parameter {:?} {:?} does not match model parameter {:?} {:?}",
                    saved.name,
                    saved.shape,
                    p.name,
                    p.value.shape()
                )));
            }
            p.value = ndarray::ArrayD::from_shape_vec(saved.shape, saved.values)
                .map_err(|e| Error::Validation(format!("bad parameter array: {e}")))?;
        }
    }
    Ok(model)
}

/// Serialized checkpoint bytes (also handy for hashing models).
pub fn to_bytes(model: &TaggerModel) -> Result<Vec<u8>> {
    serde_json::to_vec(&to_checkpoint(model))
        .map_err(|e| Error::Validation(format!("checkpoint serialization failed: {e}")))
}

pub fn save(model: &TaggerModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(model)?).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load(path: impl AsRef<Path>) -> Result<TaggerModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| {
        Error::MissingArtifact(format!("checkpoint {}: {e}", path.display()))
    })?;
    let ckpt: Checkpoint = serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        message: format!("invalid checkpoint: {e}"),
    })?;
    from_checkpoint(ckpt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tagger::tests::tiny_model;

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let model = tiny_model(true, 21);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save(&model, &path).unwrap();
        let loaded = load(&path).unwrap();

        for (a, b) in model.params().iter().zip(loaded.params()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.value.shape(), b.value.shape());
            for (x, y) in a.value.iter().zip(b.value.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        assert_eq!(model.config, loaded.config);
        assert_eq!(model.vocab, loaded.vocab);

        // Saving the loaded model reproduces the file byte for byte.
        let again = to_bytes(&loaded).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), again);
    }

    #[test]
    fn missing_checkpoint_is_a_missing_artifact() {
        assert!(matches!(
            load("/nonexistent/m.ckpt"),
            Err(crate::Error::MissingArtifact(_))
        ));
    }
}
