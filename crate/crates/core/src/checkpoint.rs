//! Checkpoint directories: `manifest.json` plus one raw little-endian `f64`
//! file per tensor.

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::cycles::TimeEncoder;
use crate::data::{parse_date, VocabHashes, DATE_FORMAT};
use crate::error::{Error, Result};
use crate::scoring::{EncoderKind, Model, ModelParams, ModelShape};
use crate::tensor::DenseMatrix;
use crate::train::{TrainConfig, RNG_ALGORITHM};

pub const MANIFEST: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub variant: crate::scoring::Variant,
    pub encoder: Option<EncoderKind>,
    pub shape: ModelShape,
    pub num_timestamps: usize,
    /// Dates behind each timestamp index; needed to rebuild the cyclic encoder.
    pub time_dates: Vec<String>,
    pub config: TrainConfig,
    pub epoch: usize,
    pub seed: u64,
    pub rng: String,
    pub vocab: VocabHashes,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub model: Model,
}

fn encoder_kind(model: &Model) -> Option<EncoderKind> {
    match &model.time_encoder {
        Some(TimeEncoder::Simple { .. }) => Some(EncoderKind::Ste),
        Some(TimeEncoder::Cyclic { .. }) => Some(EncoderKind::Cte),
        None => None,
    }
}

fn tensor_file(name: &str) -> String {
    format!("{name}.f64")
}

/// Writes `model` under `dir` (created if needed).
pub fn save_checkpoint(
    dir: &Path,
    model: &Model,
    config: &TrainConfig,
    epoch: usize,
    vocab: &VocabHashes,
    time_dates: &[NaiveDate],
) -> Result<Manifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tensors = Vec::new();
    for (name, m) in model.params.tensors() {
        let file = tensor_file(&name);
        let mut bytes = Vec::with_capacity(m.len() * 8);
        for x in m.as_slice() {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        let path = dir.join(&file);
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        tensors.push(TensorEntry {
            name,
            rows: m.rows(),
            cols: m.cols(),
            file,
        });
    }
    let num_timestamps = model.time_encoder.as_ref().map_or(0, TimeEncoder::num_timestamps);
    let time_dates = match &model.time_encoder {
        Some(TimeEncoder::Cyclic { .. }) => time_dates.iter().map(|d| d.format(DATE_FORMAT).to_string()).collect(),
        _ => Vec::new(),
    };
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        variant: model.shape.variant,
        encoder: encoder_kind(model),
        shape: model.shape,
        num_timestamps,
        time_dates,
        config: config.clone(),
        epoch,
        seed: config.seed,
        rng: RNG_ALGORITHM.to_string(),
        vocab: vocab.clone(),
        tensors,
    };
    let path = dir.join(MANIFEST);
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::CorruptCheckpoint(format!("{}: {e}", path.display())))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::CorruptCheckpoint(format!(
            "unsupported format version {}",
            manifest.format_version
        )));
    }
    if manifest.shape.variant != manifest.variant {
        return Err(Error::CorruptCheckpoint("variant disagrees with shape".into()));
    }
    Ok(manifest)
}

fn read_tensor(dir: &Path, entry: &TensorEntry) -> Result<DenseMatrix> {
    if entry.file.contains(['/', '\\']) || entry.file.starts_with('.') {
        return Err(Error::CorruptCheckpoint(format!("bad tensor file name `{}`", entry.file)));
    }
    let path = dir.join(&entry.file);
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let expected = entry.rows * entry.cols * 8;
    if bytes.len() != expected {
        return Err(Error::CheckpointShape {
            name: entry.name.clone(),
            message: format!("{} bytes on disk, manifest implies {expected}", bytes.len()),
        });
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    DenseMatrix::from_vec(entry.rows, entry.cols, data)
}

fn rebuild_encoder(manifest: &Manifest) -> Result<Option<TimeEncoder>> {
    match manifest.encoder {
        None => Ok(None),
        Some(EncoderKind::Ste) => Ok(Some(TimeEncoder::simple(manifest.num_timestamps))),
        Some(EncoderKind::Cte) => {
            let dates = manifest
                .time_dates
                .iter()
                .map(|d| parse_date(d))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
            if dates.len() != manifest.num_timestamps {
                return Err(Error::CorruptCheckpoint("time_dates length disagrees with num_timestamps".into()));
            }
            Ok(Some(TimeEncoder::cyclic(&dates)?))
        }
    }
}

/// Loads a checkpoint, reconstructing the model exactly as saved.
pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let manifest = read_manifest(dir)?;
    let encoder = rebuild_encoder(&manifest)?;
    let mut params = ModelParams::zeros(&manifest.shape, encoder.as_ref())
        .map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
    {
        let slots = params.tensors_mut();
        if slots.len() != manifest.tensors.len() {
            return Err(Error::CheckpointShape {
                name: "<all>".into(),
                message: format!("manifest lists {} tensors, layout needs {}", manifest.tensors.len(), slots.len()),
            });
        }
        for ((name, slot), entry) in slots.into_iter().zip(&manifest.tensors) {
            if name != entry.name || slot.shape() != (entry.rows, entry.cols) {
                return Err(Error::CheckpointShape {
                    name: entry.name.clone(),
                    message: format!(
                        "layout expects `{name}` {:?}, manifest has {:?}",
                        slot.shape(),
                        (entry.rows, entry.cols)
                    ),
                });
            }
            *slot = read_tensor(dir, entry)?;
        }
    }
    let model = Model::from_params(manifest.shape, params, encoder)?;
    Ok(Checkpoint { manifest, model })
}

impl Checkpoint {
    pub fn verify_vocab(&self, actual: &VocabHashes) -> Result<()> {
        let expected = &self.manifest.vocab;
        for (what, e, a) in [
            ("entities", &expected.entities, &actual.entities),
            ("relations", &expected.relations, &actual.relations),
            ("timestamps", &expected.timestamps, &actual.timestamps),
        ] {
            if e != a {
                return Err(Error::VocabMismatch {
                    what,
                    expected: e.clone(),
                    actual: a.clone(),
                });
            }
        }
        Ok(())
    }

    /// Fails unless the checkpoint has exactly the requested layout.
    pub fn expect_shape(&self, shape: &ModelShape) -> Result<()> {
        if &self.manifest.shape != shape {
            return Err(Error::CheckpointShape {
                name: "<model>".into(),
                message: format!("checkpoint has {:?}, expected {:?}", self.manifest.shape, shape),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Vocab;
    use crate::scoring::Variant;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dates() -> Vec<NaiveDate> {
        ["2014-01-01", "2014-01-02", "2015-06-30"].iter().map(|d| parse_date(d).unwrap()).collect()
    }

    fn model(variant: Variant, encoder: EncoderKind) -> Model {
        let shape = ModelShape {
            variant,
            num_entities: 4,
            num_relations: 2,
            d_e: 3,
            d_r: 3,
            d_t: 3,
            k: if variant == Variant::Ftp { 1 } else { 2 },
        };
        let enc = match encoder {
            EncoderKind::Ste => TimeEncoder::simple(3),
            EncoderKind::Cte => TimeEncoder::cyclic(&dates()).unwrap(),
        };
        Model::new(shape, Some(enc), &mut ChaCha8Rng::seed_from_u64(9)).unwrap()
    }

    fn hashes() -> VocabHashes {
        Vocab::build(&[]).hashes()
    }

    #[test]
    fn round_trip_is_exact_for_every_variant() {
        for variant in [Variant::LowFer, Variant::T, Variant::Tnt, Variant::Cfb, Variant::Ftp] {
            for encoder in [EncoderKind::Ste, EncoderKind::Cte] {
                let m = model(variant, encoder);
                let dir = tempfile::tempdir().unwrap();
                save_checkpoint(dir.path(), &m, &TrainConfig::default(), 4, &hashes(), &dates()).unwrap();
                let loaded = load_checkpoint(dir.path()).unwrap();
                assert_eq!(loaded.model, m, "{variant} {encoder:?}");
                assert_eq!(loaded.manifest.epoch, 4);
                assert_eq!(loaded.manifest.rng, RNG_ALGORITHM);
                loaded.expect_shape(&m.shape).unwrap();
            }
        }
    }

    #[test]
    fn truncated_tensor_is_rejected() {
        let m = model(Variant::Cfb, EncoderKind::Ste);
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &m, &TrainConfig::default(), 1, &hashes(), &[]).unwrap();
        let path = dir.path().join("u.f64");
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(Error::CheckpointShape { .. })));
    }

    #[test]
    fn garbage_manifest_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join(MANIFEST), "{not json").unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(Error::CorruptCheckpoint(_))));
    }

    #[test]
    fn missing_directory_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_checkpoint(&dir.path().join("absent")), Err(Error::Io { .. })));
    }

    #[test]
    fn vocab_and_shape_mismatches() {
        let m = model(Variant::T, EncoderKind::Ste);
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &m, &TrainConfig::default(), 1, &hashes(), &[]).unwrap();
        let loaded = load_checkpoint(dir.path()).unwrap();
        let mut other = hashes();
        other.entities = "0".repeat(64);
        assert!(matches!(loaded.verify_vocab(&other), Err(Error::VocabMismatch { what: "entities", .. })));
        let mut shape = m.shape;
        shape.d_e = 5;
        assert!(matches!(loaded.expect_shape(&shape), Err(Error::CheckpointShape { .. })));
    }

    #[test]
    fn tensor_file_names_cannot_escape() {
        let m = model(Variant::LowFer, EncoderKind::Ste);
        let dir = tempfile::tempdir().unwrap();
        let mut manifest = save_checkpoint(dir.path(), &m, &TrainConfig::default(), 1, &hashes(), &[]).unwrap();
        manifest.tensors[0].file = "../entity.f64".into();
        std::fs::write(dir.path().join(MANIFEST), serde_json::to_string(&manifest).unwrap()).unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(Error::CorruptCheckpoint(_))));
    }
}
