//! Versioned JSON checkpoints with lossless binary64 payloads.
//!
//! Parameter arrays are stored as base64 of their little-endian byte image,
//! so save -> load -> save is byte-identical and loaded policies reproduce
//! pre-save log-densities bit for bit. The generator state rides along as
//! four hex words, and the full config is echoed for reconstruction.

use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use rnf_core::autodiff::ParameterStore;
use rnf_core::rng::Rng64;

use crate::config::Config;
use crate::CliError;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub config: Config,
    pub step: u64,
    /// xoshiro256++ state, four hex words.
    pub rng: [String; 4],
    pub params: Vec<ParamArray>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamArray {
    pub name: String,
    pub len: usize,
    pub data: String,
}

fn encode_array(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    BASE64.encode(bytes)
}

fn decode_array(data: &str, len: usize) -> Result<Vec<f64>, CliError> {
    let bytes = BASE64
        .decode(data)
        .map_err(|e| CliError::Format(format!("checkpoint array payload: {e}")))?;
    if bytes.len() != len * 8 {
        return Err(CliError::Format(format!(
            "checkpoint array payload has {} bytes, expected {}",
            bytes.len(),
            len * 8
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn push_store(params: &mut Vec<ParamArray>, prefix: &str, store: &ParameterStore) {
    for slot in 0..store.slot_count() {
        let values = store.array(slot);
        params.push(ParamArray {
            name: format!("{prefix}/{}", store.name(slot)),
            len: values.len(),
            data: encode_array(values),
        });
    }
}

impl Checkpoint {
    pub fn new(
        config: &Config,
        step: u64,
        rng: &Rng64,
        policy: &ParameterStore,
        value: &ParameterStore,
    ) -> Checkpoint {
        let mut params = Vec::new();
        push_store(&mut params, "policy", policy);
        push_store(&mut params, "value", value);
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config: config.clone(),
            step,
            rng: rng.state().map(|w| format!("{w:016x}")),
            params,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut text = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        text.push('\n');
        text.into_bytes()
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.to_bytes())
            .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| CliError::Format(format!("checkpoint parse error: {e}")))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(CliError::Format(format!(
                "checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
                ckpt.version
            )));
        }
        Ok(ckpt)
    }

    pub fn rng_state(&self) -> Result<Rng64, CliError> {
        let mut words = [0u64; 4];
        for (w, text) in words.iter_mut().zip(&self.rng) {
            *w = u64::from_str_radix(text, 16)
                .map_err(|e| CliError::Format(format!("checkpoint rng word '{text}': {e}")))?;
        }
        Ok(Rng64::from_state(words))
    }

    /// Fill a structurally matching store from the `prefix/`-named arrays.
    /// Every slot must be covered with the exact length.
    pub fn restore_store(&self, prefix: &str, store: &mut ParameterStore) -> Result<(), CliError> {
        for slot in 0..store.slot_count() {
            let name = format!("{prefix}/{}", store.name(slot));
            let entry = self
                .params
                .iter()
                .find(|p| p.name == name)
                .ok_or_else(|| CliError::Format(format!("checkpoint missing array '{name}'")))?;
            let values = decode_array(&entry.data, entry.len)?;
            let target = store.array_mut(slot);
            if values.len() != target.len() {
                return Err(CliError::Format(format!(
                    "checkpoint array '{name}' has length {}, expected {}",
                    values.len(),
                    target.len()
                )));
            }
            target.copy_from_slice(&values);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payload_roundtrip_is_bit_exact() {
        let values = vec![0.1, -2.5e-300, f64::MAX, 1.0 + f64::EPSILON, -0.0];
        let decoded = decode_array(&encode_array(&values), values.len()).unwrap();
        for (a, b) in values.iter().zip(&decoded) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn wrong_length_is_a_format_error() {
        let data = encode_array(&[1.0, 2.0]);
        assert!(matches!(decode_array(&data, 3), Err(CliError::Format(_))));
    }
}
