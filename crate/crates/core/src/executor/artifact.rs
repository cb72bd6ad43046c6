//! Compiled artifacts and their on-disk container.
//!
//! Container layout: the 8-byte magic `LIMESART`, one version byte, the
//! canonical fingerprint line terminated by `\n`, then the engine blob.

use chrono::{DateTime, Utc};

use super::fingerprint::EngineFingerprint;
use crate::digest::ModuleHash;

pub const CONTAINER_MAGIC: &[u8; 8] = b"LIMESART";
pub const CONTAINER_VERSION: u8 = 1;

/// Engine-serialized machine code for one module.
#[derive(Clone, Debug)]
pub struct CompiledArtifact {
    pub source_hash: ModuleHash,
    pub fingerprint: EngineFingerprint,
    pub blob: Vec<u8>,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ContainerError {
    #[error("missing LIMESART magic")]
    BadMagic,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u8),
    #[error("container header is truncated or not UTF-8")]
    BadHeader,
    #[error("fingerprint line: {0}")]
    BadFingerprint(String),
    #[error("container holds an empty blob")]
    EmptyBlob,
}

impl CompiledArtifact {
    pub fn encode(&self) -> Vec<u8> {
        let line = self.fingerprint.canonical_line();
        let mut out = Vec::with_capacity(CONTAINER_MAGIC.len() + 2 + line.len() + self.blob.len());
        out.extend_from_slice(CONTAINER_MAGIC);
        out.push(CONTAINER_VERSION);
        out.extend_from_slice(line.as_bytes());
        out.push(b'\n');
        out.extend_from_slice(&self.blob);
        out
    }

    /// The container does not carry the source hash or creation time; the
    /// caller supplies them (the registry keys files by source hash).
    pub fn decode(
        bytes: &[u8],
        source_hash: ModuleHash,
        created_at: DateTime<Utc>,
    ) -> Result<Self, ContainerError> {
        let (fingerprint, blob) = split_container(bytes)?;
        Ok(CompiledArtifact {
            source_hash,
            fingerprint,
            blob: blob.to_vec(),
            created_at,
        })
    }
}

/// Cheap structural check used when reconciling a store.
pub fn has_container_magic(bytes: &[u8]) -> bool {
    bytes.len() > CONTAINER_MAGIC.len() && &bytes[..CONTAINER_MAGIC.len()] == CONTAINER_MAGIC
}

fn split_container(bytes: &[u8]) -> Result<(EngineFingerprint, &[u8]), ContainerError> {
    let rest = bytes.strip_prefix(CONTAINER_MAGIC.as_slice()).ok_or(ContainerError::BadMagic)?;
    let (&version, rest) = rest.split_first().ok_or(ContainerError::BadHeader)?;
    if version != CONTAINER_VERSION {
        return Err(ContainerError::UnsupportedVersion(version));
    }
    let nl = rest.iter().position(|&b| b == b'\n').ok_or(ContainerError::BadHeader)?;
    let line = std::str::from_utf8(&rest[..nl]).map_err(|_| ContainerError::BadHeader)?;
    let fingerprint = line
        .parse()
        .map_err(|e: super::FingerprintError| ContainerError::BadFingerprint(e.to_string()))?;
    let blob = &rest[nl + 1..];
    if blob.is_empty() {
        return Err(ContainerError::EmptyBlob);
    }
    Ok((fingerprint, blob))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn artifact(blob: Vec<u8>) -> CompiledArtifact {
        CompiledArtifact {
            source_hash: ModuleHash::of(b"module"),
            fingerprint: EngineFingerprint::new("wasmtime", "1.2.3", "t", ["f"]).unwrap(),
            blob,
            created_at: Utc::now(),
        }
    }

    #[test]
    fn layout_is_magic_version_line_blob() {
        let bytes = artifact(vec![1, 2, 3]).encode();
        assert_eq!(&bytes[..8], b"LIMESART");
        assert_eq!(bytes[8], 1);
        let expected_line = b"engine=wasmtime;version=1.2.3;target=t;features=f\n";
        assert_eq!(&bytes[9..9 + expected_line.len()], expected_line);
        assert_eq!(&bytes[9 + expected_line.len()..], &[1, 2, 3]);
    }

    #[test]
    fn decode_rejects_damage() {
        let good = artifact(vec![9; 16]).encode();
        let h = ModuleHash::of(b"module");
        let now = Utc::now();
        assert_eq!(
            CompiledArtifact::decode(b"NOTLIMES\x01x\n1", h, now).unwrap_err(),
            ContainerError::BadMagic
        );
        let mut v2 = good.clone();
        v2[8] = 2;
        assert_eq!(
            CompiledArtifact::decode(&v2, h, now).unwrap_err(),
            ContainerError::UnsupportedVersion(2)
        );
        assert_eq!(
            CompiledArtifact::decode(&good[..20], h, now).unwrap_err(),
            ContainerError::BadHeader
        );
        let header_only = &good[..good.len() - 16];
        assert_eq!(
            CompiledArtifact::decode(header_only, h, now).unwrap_err(),
            ContainerError::EmptyBlob
        );
    }

    proptest! {
        #[test]
        fn container_round_trip(blob in proptest::collection::vec(any::<u8>(), 1..512)) {
            let a = artifact(blob);
            let back = CompiledArtifact::decode(&a.encode(), a.source_hash, a.created_at).unwrap();
            prop_assert_eq!(back.blob, a.blob);
            prop_assert_eq!(back.fingerprint, a.fingerprint);
        }
    }
}
