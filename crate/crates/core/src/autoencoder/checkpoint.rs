//! Binary checkpoint layout, all integers little-endian:
//!
//! ```text
//! magic     8 bytes  "TRKAECKP"
//! version   u32
//! len       u64      length of the JSON manifest
//! manifest  len bytes
//! payload   f64 values of every parameter, in manifest order
//! digest    32 bytes SHA-256 of everything above
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Autoencoder, ModelConfig};
use crate::anomaly::ThresholdPolicy;
use crate::error::{Error, Result};
use crate::features::NormStats;
use crate::tensor::{Parameter, Tensor};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"TRKAECKP";
const DIGEST_LEN: usize = 32;
const PREAMBLE_LEN: usize = 8 + 4 + 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Autoencoder,
    /// `None` or an unset value means the threshold was never calibrated.
    pub threshold: Option<ThresholdPolicy>,
}

impl Checkpoint {
    pub fn is_calibrated(&self) -> bool {
        self.threshold.is_some_and(|t| t.value.is_some())
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    config: ModelConfig,
    norm_stats: NormStats,
    threshold: Option<ThresholdPolicy>,
    params: Vec<ParamEntry>,
}

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    frozen: bool,
}

pub fn encode_checkpoint(model: &Autoencoder, threshold: Option<&ThresholdPolicy>) -> Result<Vec<u8>> {
    let manifest = Manifest {
        config: model.config.clone(),
        norm_stats: model.norm_stats,
        threshold: threshold.copied(),
        params: model
            .params()
            .iter()
            .map(|p| ParamEntry { name: p.name.clone(), shape: p.value.shape().to_vec(), frozen: p.frozen })
            .collect(),
    };
    let json = serde_json::to_vec(&manifest).map_err(|e| Error::invalid(format!("manifest: {e}")))?;
    let mut buf = Vec::with_capacity(PREAMBLE_LEN + json.len() + 8 * model.parameter_count() + DIGEST_LEN);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for p in model.params() {
        for v in p.value.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    Ok(buf)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let fail = |msg: String| Error::Checkpoint { path: Default::default(), msg };
    if bytes.len() < PREAMBLE_LEN + DIGEST_LEN {
        return Err(fail(format!("file is truncated ({} bytes)", bytes.len())));
    }
    if &bytes[..8] != MAGIC {
        return Err(fail("not a checkpoint file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(fail(format!("unsupported version {version}, expected {CHECKPOINT_VERSION}")));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(fail("checksum mismatch: file is truncated or corrupted".into()));
    }
    let json_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let json_end = usize::try_from(json_len)
        .ok()
        .and_then(|n| n.checked_add(PREAMBLE_LEN))
        .filter(|&end| end <= body.len())
        .ok_or_else(|| fail("manifest length exceeds file size".into()))?;
    let manifest: Manifest = serde_json::from_slice(&body[PREAMBLE_LEN..json_end])
        .map_err(|e| fail(format!("bad manifest: {e}")))?;

    let expected = manifest.config.parameter_layout();
    let names_match = expected.len() == manifest.params.len()
        && expected.iter().zip(&manifest.params).all(|((n, s), e)| *n == e.name && *s == e.shape);
    if !names_match {
        return Err(fail("parameter list does not match the stored model config".into()));
    }

    let mut payload = body[json_end..].chunks_exact(8);
    if payload.len() * 8 != body.len() - json_end {
        return Err(fail("payload is not a whole number of f64 values".into()));
    }
    let mut params = Vec::with_capacity(manifest.params.len());
    for e in manifest.params {
        let n: usize = e.shape.iter().product();
        if payload.len() < n {
            return Err(fail(format!("payload ends inside `{}`", e.name)));
        }
        let data = payload.by_ref().take(n).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let mut p = Parameter::new(e.name, Tensor::new(e.shape, data)?);
        p.frozen = e.frozen;
        params.push(p);
    }
    if payload.len() != 0 {
        return Err(fail(format!("{} trailing values after the last parameter", payload.len())));
    }
    Ok(Checkpoint {
        model: Autoencoder::from_parts(manifest.config, params, manifest.norm_stats),
        threshold: manifest.threshold,
    })
}

pub fn save_checkpoint(model: &Autoencoder, threshold: Option<&ThresholdPolicy>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_checkpoint(model, threshold)?;
    fs::write(path, bytes).map_err(|e| Error::Checkpoint { path: path.to_path_buf(), msg: e.to_string() })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let with_path = |e: Error| match e {
        Error::Checkpoint { msg, .. } => Error::Checkpoint { path: path.to_path_buf(), msg },
        other => other,
    };
    let bytes =
        fs::read(path).map_err(|e| Error::Checkpoint { path: path.to_path_buf(), msg: e.to_string() })?;
    decode_checkpoint(&bytes).map_err(with_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anomaly::ThresholdMethod;
    use crate::autoencoder::{init_model, LayerSpec};

    fn model() -> Autoencoder {
        let cfg = ModelConfig {
            input_length: 16,
            encoder_layers: vec![LayerSpec::new(4, 3, 2), LayerSpec::new(2, 3, 2)],
            decoder_layers: vec![LayerSpec::new(2, 3, 2), LayerSpec::new(4, 3, 2)],
            output_kernel: 3,
            seed: 3,
            ..ModelConfig::default()
        };
        let mut m = init_model(cfg).unwrap();
        m.norm_stats = NormStats { mean: [1500.0, 180.0], std: [900.0, 35.5] };
        m.freeze(&["enc0.weight"]).unwrap();
        m
    }

    #[test]
    fn round_trip_is_bitwise() {
        let m = model();
        let t = ThresholdPolicy::calibrated(ThresholdMethod::Quantile { q: 0.99 }, 0.1 + 0.2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&m, Some(&t), &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.model, m);
        assert_eq!(back.threshold, Some(t));
        assert!(back.is_calibrated());
        for (a, b) in back.model.params().iter().zip(m.params()) {
            assert!(a.value.data().iter().zip(b.value.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        // re-saving produces identical bytes
        assert_eq!(encode_checkpoint(&back.model, back.threshold.as_ref()).unwrap(), fs::read(&path).unwrap());
    }

    #[test]
    fn uncalibrated_status_survives() {
        let m = model();
        let back = decode_checkpoint(&encode_checkpoint(&m, None).unwrap()).unwrap();
        assert!(!back.is_calibrated());
        let unset = ThresholdPolicy::default();
        let back = decode_checkpoint(&encode_checkpoint(&m, Some(&unset)).unwrap()).unwrap();
        assert!(!back.is_calibrated());
    }

    #[test]
    fn truncation_and_corruption_are_detected() {
        let bytes = encode_checkpoint(&model(), None).unwrap();
        for cut in [0, 10, PREAMBLE_LEN + 5, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(decode_checkpoint(&bytes[..cut]), Err(Error::Checkpoint { .. })), "cut {cut}");
        }
        let mut flipped = bytes.clone();
        let mid = flipped.len() - 100;
        flipped[mid] ^= 1;
        let err = decode_checkpoint(&flipped).unwrap_err();
        assert!(err.to_string().contains("checksum"), "{err}");
        let mut bad_version = bytes;
        bad_version[8] = 99;
        assert!(decode_checkpoint(&bad_version).unwrap_err().to_string().contains("version"));
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = load_checkpoint("/nonexistent/x.ckpt").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/x.ckpt"), "{err}");
    }
}
