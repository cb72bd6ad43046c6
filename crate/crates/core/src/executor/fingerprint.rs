use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Identifies the engine build and configuration that produced a compiled
/// artifact. Artifacts are only reused under an identical fingerprint.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EngineFingerprint {
    pub engine_name: String,
    pub engine_version: String,
    pub target_triple: String,
    feature_flags: Vec<String>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum FingerprintError {
    #[error("fingerprint field {field} contains a reserved character: {value:?}")]
    ReservedCharacter { field: &'static str, value: String },
    #[error("malformed fingerprint line {0:?}")]
    Malformed(String),
}

const RESERVED: &[char] = &[';', '=', ',', '\n', '\r'];

fn check(field: &'static str, value: &str) -> Result<(), FingerprintError> {
    if value.is_empty() || value.contains(RESERVED) {
        return Err(FingerprintError::ReservedCharacter {
            field,
            value: value.to_string(),
        });
    }
    Ok(())
}

impl EngineFingerprint {
    pub fn new(
        engine_name: impl Into<String>,
        engine_version: impl Into<String>,
        target_triple: impl Into<String>,
        feature_flags: impl IntoIterator<Item = impl Into<String>>,
    ) -> Result<Self, FingerprintError> {
        let mut feature_flags: Vec<String> = feature_flags.into_iter().map(Into::into).collect();
        feature_flags.sort();
        feature_flags.dedup();
        let fp = EngineFingerprint {
            engine_name: engine_name.into(),
            engine_version: engine_version.into(),
            target_triple: target_triple.into(),
            feature_flags,
        };
        check("engine_name", &fp.engine_name)?;
        check("engine_version", &fp.engine_version)?;
        check("target_triple", &fp.target_triple)?;
        for flag in &fp.feature_flags {
            check("feature_flags", flag)?;
        }
        Ok(fp)
    }

    /// Sorted, deduplicated.
    pub fn feature_flags(&self) -> &[String] {
        &self.feature_flags
    }

    /// `engine=<name>;version=<semver>;target=<triple>;features=<a,b,...>`
    pub fn canonical_line(&self) -> String {
        format!(
            "engine={};version={};target={};features={}",
            self.engine_name,
            self.engine_version,
            self.target_triple,
            self.feature_flags.join(",")
        )
    }
}

impl fmt::Display for EngineFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical_line())
    }
}

impl FromStr for EngineFingerprint {
    type Err = FingerprintError;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let malformed = || FingerprintError::Malformed(line.to_string());
        let mut parts = line.split(';');
        let mut field = |key: &str| -> Result<&str, FingerprintError> {
            parts
                .next()
                .and_then(|p| p.strip_prefix(key))
                .and_then(|p| p.strip_prefix('='))
                .ok_or_else(malformed)
        };
        let name = field("engine")?;
        let version = field("version")?;
        let target = field("target")?;
        let features = field("features")?;
        if parts.next().is_some() {
            return Err(malformed());
        }
        let flags: Vec<&str> = if features.is_empty() {
            Vec::new()
        } else {
            features.split(',').collect()
        };
        let fp = EngineFingerprint::new(name, version, target, flags)?;
        // Only the canonical spelling is accepted, so equal lines mean equal fingerprints.
        if fp.canonical_line() != line {
            return Err(malformed());
        }
        Ok(fp)
    }
}
