//! Persistent, content-addressed store of function modules and their
//! compiled artifacts.
//!
//! Layout of a data directory:
//!
//! ```text
//! <root>/index.json
//! <root>/modules/<hex-id>.wasm
//! <root>/artifacts/<hex-id>.limesart
//! ```
//!
//! Every file is replaced with write-temp-then-rename, and an artifact always
//! lands before the index entry that points at it, so a crash at any point
//! leaves an index that only references complete artifacts.

mod store;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::digest::{ModuleHash, HASH_ALGO};
use crate::executor::{has_container_magic, CompiledArtifact, ComponentHandle, ExecError, Executor};

pub const DATA_DIR_ENV: &str = "LIMES_DATA_DIR";
pub const DEFAULT_DATA_DIR: &str = "./limes-data";
pub const INDEX_VERSION: u32 = 1;
pub const MAX_NAME_LEN: usize = 128;

const INDEX_FILE: &str = "index.json";
const MODULES_DIR: &str = "modules";
const ARTIFACTS_DIR: &str = "artifacts";

/// `$LIMES_DATA_DIR`, or `./limes-data`.
pub fn default_data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModuleState {
    Registered,
    Initialized,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleDescriptor {
    pub module_id: ModuleHash,
    pub name: String,
    pub size_bytes: u64,
    pub registered_at: DateTime<Utc>,
    pub state: ModuleState,
    /// Relative to the data directory.
    pub artifact_path: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexFile {
    version: u32,
    hash_algo: String,
    entries: Vec<ModuleDescriptor>,
    compile_count: u64,
    hit_count: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("malformed module: {0}")]
    MalformedModule(String),
    #[error("invalid module name: {0}")]
    InvalidName(String),
    #[error("unknown module {0}")]
    UnknownModule(ModuleHash),
    #[error("compilation failed: {0}")]
    CompileFailure(#[source] ExecError),
    #[error("storage failure: {0}")]
    StorageFailure(String),
}

impl RegistryError {
    pub fn code(&self) -> &'static str {
        match self {
            RegistryError::MalformedModule(_) => "MalformedModule",
            RegistryError::InvalidName(_) => "InvalidName",
            RegistryError::UnknownModule(_) => "UnknownModule",
            RegistryError::CompileFailure(_) => "CompileFailure",
            RegistryError::StorageFailure(_) => "StorageFailure",
        }
    }
}

fn storage(path: &Path, e: impl std::fmt::Display) -> RegistryError {
    RegistryError::StorageFailure(format!("{}: {e}", path.display()))
}

/// An artifact ready to instantiate, as returned by [`Registry::load`].
pub struct Loaded {
    pub artifact: CompiledArtifact,
    pub handle: ComponentHandle,
    pub cache_hit: bool,
}

/// Snapshot of the registry counters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryCounters {
    pub compile_count: u64,
    pub hit_count: u64,
}

pub struct Registry {
    root: PathBuf,
    executor: Arc<Executor>,
    entries: RwLock<BTreeMap<ModuleHash, ModuleDescriptor>>,
    /// Serializes every mutation of the data directory.
    writer: Mutex<()>,
    compile_count: AtomicU64,
    hit_count: AtomicU64,
}

impl Registry {
    /// Opens (creating if needed) the store at `root`, discarding leftovers
    /// of interrupted writes and demoting entries whose artifact is gone.
    pub fn open(root: impl Into<PathBuf>, executor: Arc<Executor>) -> Result<Self, RegistryError> {
        let root = root.into();
        for dir in [root.clone(), root.join(MODULES_DIR), root.join(ARTIFACTS_DIR)] {
            fs::create_dir_all(&dir).map_err(|e| storage(&dir, e))?;
            store::sweep_temp_files(&dir).map_err(|e| storage(&dir, e))?;
        }
        let index_path = root.join(INDEX_FILE);
        let index = match fs::read(&index_path) {
            Ok(bytes) => {
                let index: IndexFile =
                    serde_json::from_slice(&bytes).map_err(|e| storage(&index_path, e))?;
                if index.version != INDEX_VERSION {
                    return Err(storage(&index_path, format!("unsupported index version {}", index.version)));
                }
                if index.hash_algo != HASH_ALGO {
                    return Err(storage(
                        &index_path,
                        format!("store hashes with {}, expected {HASH_ALGO}", index.hash_algo),
                    ));
                }
                index
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => IndexFile {
                version: INDEX_VERSION,
                hash_algo: HASH_ALGO.to_string(),
                entries: Vec::new(),
                compile_count: 0,
                hit_count: 0,
            },
            Err(e) => return Err(storage(&index_path, e)),
        };

        let mut demoted = false;
        let mut entries = BTreeMap::new();
        for mut desc in index.entries {
            if desc.state == ModuleState::Initialized && !artifact_valid(&root, &desc) {
                log::warn!("module {} lost its artifact; marking it Registered", desc.module_id);
                desc.state = ModuleState::Registered;
                desc.artifact_path = None;
                demoted = true;
            }
            entries.insert(desc.module_id, desc);
        }
        let registry = Registry {
            root,
            executor,
            entries: RwLock::new(entries),
            writer: Mutex::new(()),
            compile_count: AtomicU64::new(index.compile_count),
            hit_count: AtomicU64::new(index.hit_count),
        };
        if demoted {
            let _w = registry.writer.lock().unwrap();
            registry.persist_index()?;
        }
        Ok(registry)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn executor(&self) -> &Arc<Executor> {
        &self.executor
    }

    pub fn counters(&self) -> RegistryCounters {
        RegistryCounters {
            compile_count: self.compile_count.load(Ordering::SeqCst),
            hit_count: self.hit_count.load(Ordering::SeqCst),
        }
    }

    /// Stores `wasm` under its content hash. Re-registering identical bytes
    /// returns the existing descriptor and leaves the store untouched.
    pub fn register(&self, wasm: &[u8], name: &str) -> Result<ModuleDescriptor, RegistryError> {
        if name.chars().count() > MAX_NAME_LEN {
            return Err(RegistryError::InvalidName(format!(
                "name is longer than {MAX_NAME_LEN} characters"
            )));
        }
        validate_module(wasm)?;
        let module_id = ModuleHash::of(wasm);
        if let Some(existing) = self.descriptor(&module_id) {
            return Ok(existing);
        }

        let _w = self.writer.lock().unwrap();
        if let Some(existing) = self.entries.read().unwrap().get(&module_id) {
            return Ok(existing.clone());
        }
        let path = self.module_path(&module_id);
        store::write_atomic(&path, wasm, "module").map_err(|e| storage(&path, e))?;
        let desc = ModuleDescriptor {
            module_id,
            name: name.to_string(),
            size_bytes: wasm.len() as u64,
            registered_at: Utc::now(),
            state: ModuleState::Registered,
            artifact_path: None,
        };
        self.entries.write().unwrap().insert(module_id, desc.clone());
        if let Err(e) = self.persist_index() {
            self.entries.write().unwrap().remove(&module_id);
            return Err(e);
        }
        Ok(desc)
    }

    /// Compiles the module and persists its artifact. A no-op (no counter
    /// changes) when a valid artifact is already stored.
    pub fn initialize(&self, id: &ModuleHash) -> Result<ModuleDescriptor, RegistryError> {
        let desc = self.descriptor(id).ok_or(RegistryError::UnknownModule(*id))?;
        if desc.state == ModuleState::Initialized && self.read_artifact(&desc).is_some() {
            return Ok(desc);
        }
        self.fetch(id)?;
        self.descriptor(id).ok_or(RegistryError::UnknownModule(*id))
    }

    /// Returns the stored artifact when it is present, matches the engine
    /// fingerprint and loads; otherwise compiles and stores a fresh one.
    pub fn get_or_compile(&self, id: &ModuleHash) -> Result<(CompiledArtifact, bool), RegistryError> {
        let loaded = self.fetch(id)?;
        Ok((loaded.artifact, loaded.cache_hit))
    }

    /// [`Registry::get_or_compile`], also handing back the loaded component.
    pub fn load(&self, id: &ModuleHash) -> Result<Loaded, RegistryError> {
        self.fetch(id)
    }

    /// Sorted newest first.
    pub fn list_modules(&self) -> Vec<ModuleDescriptor> {
        let mut all: Vec<ModuleDescriptor> = self
            .entries
            .read()
            .unwrap()
            .values()
            .map(|d| self.reconciled(d.clone()))
            .collect();
        all.sort_by(|a, b| {
            b.registered_at
                .cmp(&a.registered_at)
                .then_with(|| a.module_id.cmp(&b.module_id))
        });
        all
    }

    pub fn descriptor(&self, id: &ModuleHash) -> Option<ModuleDescriptor> {
        let desc = self.entries.read().unwrap().get(id).cloned()?;
        Some(self.reconciled(desc))
    }

    pub fn module_bytes(&self, id: &ModuleHash) -> Result<Vec<u8>, RegistryError> {
        if !self.entries.read().unwrap().contains_key(id) {
            return Err(RegistryError::UnknownModule(*id));
        }
        let path = self.module_path(id);
        fs::read(&path).map_err(|e| storage(&path, e))
    }

    /// Deletes the module bytes, its artifact and its index entry.
    pub fn remove(&self, id: &ModuleHash) -> Result<(), RegistryError> {
        let _w = self.writer.lock().unwrap();
        let removed = self
            .entries
            .write()
            .unwrap()
            .remove(id)
            .ok_or(RegistryError::UnknownModule(*id))?;
        if let Err(e) = self.persist_index() {
            self.entries.write().unwrap().insert(*id, removed);
            return Err(e);
        }
        // The index no longer points at these, so a crash here only leaks files.
        for path in [self.module_path(id), self.artifact_path(id)] {
            match fs::remove_file(&path) {
                Ok(()) => {}
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(storage(&path, e)),
            }
        }
        Ok(())
    }

    /// Writes the counters to `index.json`. Counters are otherwise only
    /// persisted alongside index mutations.
    pub fn flush(&self) -> Result<(), RegistryError> {
        let _w = self.writer.lock().unwrap();
        self.persist_index()
    }

    fn fetch(&self, id: &ModuleHash) -> Result<Loaded, RegistryError> {
        let desc = self.descriptor(id).ok_or(RegistryError::UnknownModule(*id))?;
        if let Some(artifact) = self.read_artifact(&desc) {
            match self.executor.load_artifact(&artifact) {
                Ok(handle) => {
                    self.hit_count.fetch_add(1, Ordering::SeqCst);
                    return Ok(Loaded {
                        artifact,
                        handle,
                        cache_hit: true,
                    });
                }
                Err(e) => log::warn!("stored artifact for {id} unusable ({e}); recompiling"),
            }
        }

        // Compiling outside the writer lock lets two requests race on the
        // same module; both produce valid artifacts and the last rename wins.
        let wasm = self.module_bytes(id)?;
        let handle = self
            .executor
            .compile_component(&wasm)
            .map_err(RegistryError::CompileFailure)?;
        let artifact = self.executor.serialize(&handle).map_err(RegistryError::CompileFailure)?;
        self.store_artifact(id, &artifact)?;
        self.compile_count.fetch_add(1, Ordering::SeqCst);
        Ok(Loaded {
            artifact,
            handle,
            cache_hit: false,
        })
    }

    fn store_artifact(&self, id: &ModuleHash, artifact: &CompiledArtifact) -> Result<(), RegistryError> {
        let _w = self.writer.lock().unwrap();
        if !self.entries.read().unwrap().contains_key(id) {
            return Err(RegistryError::UnknownModule(*id));
        }
        let path = self.artifact_path(id);
        store::write_atomic(&path, &artifact.encode(), "artifact").map_err(|e| storage(&path, e))?;
        let rel = format!("{ARTIFACTS_DIR}/{}.limesart", id.to_hex());
        let previous = {
            let mut entries = self.entries.write().unwrap();
            let desc = entries.get_mut(id).expect("checked above");
            let previous = desc.clone();
            desc.state = ModuleState::Initialized;
            desc.artifact_path = Some(rel);
            previous
        };
        if let Err(e) = self.persist_index() {
            self.entries.write().unwrap().insert(*id, previous);
            return Err(e);
        }
        Ok(())
    }

    /// Caller holds `writer`.
    fn persist_index(&self) -> Result<(), RegistryError> {
        let index = IndexFile {
            version: INDEX_VERSION,
            hash_algo: HASH_ALGO.to_string(),
            entries: self.entries.read().unwrap().values().cloned().collect(),
            compile_count: self.compile_count.load(Ordering::SeqCst),
            hit_count: self.hit_count.load(Ordering::SeqCst),
        };
        let path = self.root.join(INDEX_FILE);
        let bytes = serde_json::to_vec_pretty(&index).map_err(|e| storage(&path, e))?;
        store::write_atomic(&path, &bytes, "index").map_err(|e| storage(&path, e))
    }

    fn read_artifact(&self, desc: &ModuleDescriptor) -> Option<CompiledArtifact> {
        let rel = desc.artifact_path.as_ref()?;
        let path = self.root.join(rel);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) => {
                log::warn!("artifact {} unreadable: {e}", path.display());
                return None;
            }
        };
        let created_at = fs::metadata(&path)
            .and_then(|m| m.modified())
            .map(DateTime::<Utc>::from)
            .unwrap_or_else(|_| Utc::now());
        match CompiledArtifact::decode(&bytes, desc.module_id, created_at) {
            Ok(a) if &a.fingerprint == self.executor.fingerprint() => Some(a),
            Ok(a) => {
                log::warn!(
                    "artifact {} was built by a different engine ({})",
                    path.display(),
                    a.fingerprint
                );
                None
            }
            Err(e) => {
                log::warn!("artifact {} rejected: {e}", path.display());
                None
            }
        }
    }

    fn reconciled(&self, mut desc: ModuleDescriptor) -> ModuleDescriptor {
        if desc.state == ModuleState::Initialized && !artifact_valid(&self.root, &desc) {
            desc.state = ModuleState::Registered;
            desc.artifact_path = None;
        }
        desc
    }

    fn module_path(&self, id: &ModuleHash) -> PathBuf {
        self.root.join(MODULES_DIR).join(format!("{}.wasm", id.to_hex()))
    }

    fn artifact_path(&self, id: &ModuleHash) -> PathBuf {
        self.root.join(ARTIFACTS_DIR).join(format!("{}.limesart", id.to_hex()))
    }
}

/// Artifact file exists and starts with the container magic.
fn artifact_valid(root: &Path, desc: &ModuleDescriptor) -> bool {
    use std::io::Read;
    let Some(rel) = &desc.artifact_path else {
        return false;
    };
    let mut head = [0u8; 9];
    match fs::File::open(root.join(rel)).and_then(|mut f| f.read_exact(&mut head)) {
        Ok(()) => has_container_magic(&head),
        Err(_) => false,
    }
}

fn validate_module(wasm: &[u8]) -> Result<(), RegistryError> {
    if wasm.is_empty() {
        return Err(RegistryError::MalformedModule("empty module".into()));
    }
    if !wasmparser::Parser::is_component(wasm) {
        return Err(RegistryError::MalformedModule("not a component binary".into()));
    }
    wasmparser::Validator::new_with_features(wasmparser::WasmFeatures::all())
        .validate_all(wasm)
        .map(|_| ())
        .map_err(|e| RegistryError::MalformedModule(e.to_string()))
}
