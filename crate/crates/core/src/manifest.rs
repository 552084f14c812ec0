//! Provenance records attached to every emitted dataset variant.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{GadError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Ingest,
    Expand,
    RatioAdjust,
    InjectMissing,
    Impute,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantManifest {
    pub source_id: String,
    pub transform: Transform,
    pub parameters: BTreeMap<String, Value>,
    /// Present for every stochastic transform.
    pub seed: Option<u64>,
    /// Location of the input this variant was derived from (a dataset
    /// directory, or the raw manifest for `ingest`).
    pub input: Option<String>,
    /// SHA-256 of the input's manifest, pinning the exact parent.
    pub parent_checksum: Option<String>,
    /// SHA-256 of every emitted artifact file, keyed by file name.
    pub content_checksums: BTreeMap<String, String>,
    pub validation: Option<Value>,
}

impl VariantManifest {
    pub fn new(source_id: impl Into<String>, transform: Transform) -> Self {
        Self {
            source_id: source_id.into(),
            transform,
            parameters: BTreeMap::new(),
            seed: None,
            input: None,
            parent_checksum: None,
            content_checksums: BTreeMap::new(),
            validation: None,
        }
    }

    pub fn param(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.parameters.insert(key.to_string(), value.into());
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn get_param(&self, key: &str) -> Result<&Value> {
        self.parameters
            .get(key)
            .ok_or_else(|| GadError::MalformedInput(format!("manifest lacks parameter {key:?}")))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| GadError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| GadError::io(path, e))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| GadError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_and_snake_case() {
        let m = VariantManifest::new("twitter", Transform::RatioAdjust)
            .param("target_ratio", 0.005)
            .with_seed(20);
        let text = m.to_json().unwrap();
        assert!(text.contains("\"ratio_adjust\""));
        let back: VariantManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
