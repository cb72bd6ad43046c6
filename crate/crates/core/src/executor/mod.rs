//! Compiles, caches, instantiates, runs and interrupts function components.
//!
//! Every function is a component exporting
//! `run: func(input: list<u8>) -> result<list<u8>, string>` and may import
//! WASI preview 2. Instances live in their own [`wasmtime::Store`] and are
//! bounded by an epoch deadline driven by a per-executor ticker thread.

mod artifact;
mod epoch;
mod fingerprint;
mod instance;
mod sandbox;

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use chrono::Utc;
use wasmtime::component::{Component, Linker};
use wasmtime::{Config, Engine, OptLevel, Store, Trap, UpdateDeadline};

pub use artifact::{has_container_magic, CompiledArtifact, ContainerError, CONTAINER_MAGIC, CONTAINER_VERSION};
pub use epoch::{EpochConfig, DEFAULT_DEADLINE_TICKS, DEFAULT_TICK};
pub use fingerprint::{EngineFingerprint, FingerprintError};
pub use instance::{FunctionInstance, InstanceState, InterruptHandle, TimingBreakdown};
pub use sandbox::{SandboxPolicy, GUEST_ROOT};

use crate::digest::ModuleHash;
use epoch::Ticker;
use instance::{InstanceParts, Shared};
use sandbox::HostState;

/// Name of the component export every function must provide.
pub const RUN_EXPORT: &str = "run";

pub const ENGINE_NAME: &str = "wasmtime";
/// Must match the exact wasmtime version pinned in the workspace manifest.
pub const ENGINE_VERSION: &str = "49.0.2";

pub(crate) mod bindings {
    wasmtime::component::bindgen!({
        inline: "
            package limes:function@0.1.0;
            world function {
                export run: func(input: list<u8>) -> result<list<u8>, string>;
            }
        ",
    });
}

#[derive(Debug, thiserror::Error)]
pub enum ExecError {
    #[error("malformed module: {0}")]
    MalformedModule(String),
    #[error("module does not export `{RUN_EXPORT}`")]
    MissingExport,
    #[error("engine failure: {0}")]
    EngineFailure(String),
    #[error("artifact fingerprint {found} does not match engine {expected}")]
    FingerprintMismatch {
        expected: Box<EngineFingerprint>,
        found: Box<EngineFingerprint>,
    },
    #[error("corrupt artifact: {0}")]
    CorruptArtifact(String),
    #[error("link error: {0}")]
    Link(String),
    #[error("sandbox error: {0}")]
    Sandbox(String),
    #[error("guest trapped: {reason}")]
    GuestTrap { reason: String },
    #[error("guest returned an error: {0}")]
    GuestError(String),
    #[error("interrupted by epoch deadline")]
    Interrupted,
    #[error("instance already used (state {state})")]
    InstanceReused { state: InstanceState },
    #[error("instance is not running (state {state})")]
    NotRunning { state: InstanceState },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl ExecError {
    /// Stable machine-readable name, used in API error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            ExecError::MalformedModule(_) => "MalformedModule",
            ExecError::MissingExport => "MissingExport",
            ExecError::EngineFailure(_) => "EngineFailure",
            ExecError::FingerprintMismatch { .. } => "FingerprintMismatch",
            ExecError::CorruptArtifact(_) => "CorruptArtifact",
            ExecError::Link(_) => "LinkError",
            ExecError::Sandbox(_) => "SandboxError",
            ExecError::GuestTrap { .. } => "GuestTrap",
            ExecError::GuestError(_) => "GuestError",
            ExecError::Interrupted => "Interrupted",
            ExecError::InstanceReused { .. } => "InstanceReused",
            ExecError::NotRunning { .. } => "NotRunning",
            ExecError::InvalidConfig(_) => "InvalidConfig",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExecutorConfig {
    /// Period of the epoch ticker; the resolution of every deadline.
    pub tick_interval: Duration,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        ExecutorConfig {
            tick_interval: DEFAULT_TICK,
        }
    }
}

/// A compiled component, ready to instantiate.
#[derive(Clone)]
pub struct ComponentHandle {
    component: Component,
    source_hash: ModuleHash,
}

impl std::fmt::Debug for ComponentHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ComponentHandle").field("source_hash", &self.source_hash).finish_non_exhaustive()
    }
}

impl ComponentHandle {
    pub fn source_hash(&self) -> ModuleHash {
        self.source_hash
    }
}

/// Result of [`Executor::measure_cold_start`].
#[derive(Debug)]
pub struct ColdStart {
    pub instance: FunctionInstance,
    pub cold_start: Duration,
    pub cache_hit: bool,
}

pub struct Executor {
    engine: Engine,
    linker: Linker<HostState>,
    fingerprint: EngineFingerprint,
    compiles: AtomicU64,
    _ticker: Ticker,
}

impl Executor {
    pub fn new(config: ExecutorConfig) -> Result<Self, ExecError> {
        if config.tick_interval.is_zero() {
            return Err(ExecError::InvalidConfig("tick_interval must be positive".into()));
        }
        let mut wasm_config = Config::new();
        wasm_config
            .wasm_component_model(true)
            .epoch_interruption(true)
            .cranelift_opt_level(OptLevel::Speed);
        let engine = Engine::new(&wasm_config).map_err(|e| ExecError::EngineFailure(format!("{e:#}")))?;

        let mut linker = Linker::new(&engine);
        wasmtime_wasi::p2::add_to_linker_sync(&mut linker)
            .map_err(|e| ExecError::EngineFailure(format!("{e:#}")))?;

        let fingerprint = engine_fingerprint(&engine)?;
        let ticker = Ticker::spawn(engine.clone(), config.tick_interval)
            .map_err(|e| ExecError::EngineFailure(format!("epoch ticker: {e}")))?;
        Ok(Executor {
            engine,
            linker,
            fingerprint,
            compiles: AtomicU64::new(0),
            _ticker: ticker,
        })
    }

    pub fn fingerprint(&self) -> &EngineFingerprint {
        &self.fingerprint
    }

    /// Number of JIT compilations performed by this executor.
    pub fn compile_count(&self) -> u64 {
        self.compiles.load(Ordering::SeqCst)
    }

    /// JIT-compiles `wasm` without serializing it.
    pub fn compile_component(&self, wasm: &[u8]) -> Result<ComponentHandle, ExecError> {
        if wasm.is_empty() {
            return Err(ExecError::MalformedModule("empty module".into()));
        }
        if !wasmparser::Parser::is_component(wasm) {
            return Err(ExecError::MalformedModule(
                "not a component binary (bad magic or core-module layer)".into(),
            ));
        }
        let source_hash = ModuleHash::of(wasm);
        let component = Component::from_binary(&self.engine, wasm)
            .map_err(|e| ExecError::MalformedModule(format!("{e:#}")))?;
        self.compiles.fetch_add(1, Ordering::SeqCst);
        check_run_export(&component)?;
        Ok(ComponentHandle {
            component,
            source_hash,
        })
    }

    /// Compiles `wasm` and serializes the machine code for later reuse.
    pub fn compile_module(&self, wasm: &[u8]) -> Result<CompiledArtifact, ExecError> {
        let handle = self.compile_component(wasm)?;
        self.serialize(&handle)
    }

    pub fn serialize(&self, handle: &ComponentHandle) -> Result<CompiledArtifact, ExecError> {
        let blob = handle
            .component
            .serialize()
            .map_err(|e| ExecError::EngineFailure(format!("serialize: {e:#}")))?;
        if blob.is_empty() {
            return Err(ExecError::EngineFailure("engine produced an empty artifact".into()));
        }
        Ok(CompiledArtifact {
            source_hash: handle.source_hash,
            fingerprint: self.fingerprint.clone(),
            blob,
            created_at: Utc::now(),
        })
    }

    /// Loads previously serialized machine code without invoking the compiler.
    pub fn load_artifact(&self, artifact: &CompiledArtifact) -> Result<ComponentHandle, ExecError> {
        if artifact.fingerprint != self.fingerprint {
            return Err(ExecError::FingerprintMismatch {
                expected: Box::new(self.fingerprint.clone()),
                found: Box::new(artifact.fingerprint.clone()),
            });
        }
        if artifact.blob.is_empty() {
            return Err(ExecError::CorruptArtifact("empty blob".into()));
        }
        // SAFETY: the fingerprint check above guarantees the blob was written
        // by an engine with this exact build and configuration. Wasmtime
        // re-checks its own header and the object layout, rejecting damaged
        // or truncated blobs with an error.
        let component = unsafe { Component::deserialize(&self.engine, &artifact.blob) }
            .map_err(|e| ExecError::CorruptArtifact(format!("{e:#}")))?;
        check_run_export(&component)
            .map_err(|_| ExecError::CorruptArtifact("artifact lacks the run export".into()))?;
        Ok(ComponentHandle {
            component,
            source_hash: artifact.source_hash,
        })
    }

    pub fn instantiate(
        &self,
        handle: &ComponentHandle,
        policy: &SandboxPolicy,
        epochs: EpochConfig,
    ) -> Result<FunctionInstance, ExecError> {
        self.instantiate_from(handle, policy, epochs, Instant::now(), false)
    }

    /// Like [`Executor::instantiate`], but the instance's cold start is
    /// measured from `request_start`, which the caller took before
    /// compiling or loading `handle`.
    pub fn instantiate_from(
        &self,
        handle: &ComponentHandle,
        policy: &SandboxPolicy,
        epochs: EpochConfig,
        request_start: Instant,
        cache_hit: bool,
    ) -> Result<FunctionInstance, ExecError> {
        let (state, stdout) = sandbox::build_host_state(policy)?;
        let shared = Shared::new();
        let mut store = Store::new(&self.engine, state);
        let watcher = shared.clone();
        store.epoch_deadline_callback(move |_| {
            if watcher.should_stop() {
                Err(Trap::Interrupt.into())
            } else {
                Ok(UpdateDeadline::Continue(1))
            }
        });
        shared.arm_deadline(epochs.deadline());
        store.set_epoch_deadline(1);

        let pre = self
            .linker
            .instantiate_pre(&handle.component)
            .map_err(|e| ExecError::Link(format!("{e:#}")))?;
        let pre = bindings::FunctionPre::new(pre).map_err(|e| ExecError::Link(format!("{e:#}")))?;
        let bindings = pre.instantiate(&mut store).map_err(|e| match e.downcast_ref::<Trap>() {
            Some(t) => ExecError::GuestTrap {
                reason: t.to_string(),
            },
            None => ExecError::Link(format!("{e:#}")),
        })?;
        let ready_at = Instant::now();
        Ok(FunctionInstance::from_parts(InstanceParts {
            module_hash: handle.source_hash,
            ready_at,
            cold_start: ready_at.saturating_duration_since(request_start),
            cache_hit,
            epochs,
            shared,
            store,
            bindings,
            stdout,
        }))
    }

    /// Compile-or-load plus instantiate, timed up to the moment the instance
    /// is ready. A supplied artifact that cannot be used (wrong module, wrong
    /// fingerprint, corrupt) falls back to JIT compilation.
    pub fn measure_cold_start(
        &self,
        wasm: &[u8],
        policy: &SandboxPolicy,
        epochs: EpochConfig,
        cache: Option<&CompiledArtifact>,
    ) -> Result<ColdStart, ExecError> {
        let usable = cache.filter(|a| a.source_hash == ModuleHash::of(wasm));
        if cache.is_some() && usable.is_none() {
            log::warn!("cached artifact belongs to a different module; compiling");
        }
        let start = Instant::now();
        let (handle, cache_hit) = match usable.map(|a| self.load_artifact(a)) {
            Some(Ok(handle)) => (handle, true),
            Some(Err(e @ (ExecError::FingerprintMismatch { .. } | ExecError::CorruptArtifact(_)))) => {
                log::warn!("cached artifact rejected ({e}); compiling");
                (self.compile_component(wasm)?, false)
            }
            Some(Err(e)) => return Err(e),
            None => (self.compile_component(wasm)?, false),
        };
        let instance = self.instantiate_from(&handle, policy, epochs, start, cache_hit)?;
        Ok(ColdStart {
            cold_start: instance.cold_start(),
            cache_hit,
            instance,
        })
    }
}

fn check_run_export(component: &Component) -> Result<(), ExecError> {
    match component.get_export_index(None, RUN_EXPORT) {
        Some(_) => Ok(()),
        None => Err(ExecError::MissingExport),
    }
}

fn engine_fingerprint(engine: &Engine) -> Result<EngineFingerprint, ExecError> {
    let mut hasher = DefaultHasher::new();
    engine.precompile_compatibility_hash().hash(&mut hasher);
    EngineFingerprint::new(
        ENGINE_NAME,
        ENGINE_VERSION,
        env!("LIMES_TARGET_TRIPLE"),
        [
            "component-model".to_string(),
            "epoch-interruption".to_string(),
            "opt-speed".to_string(),
            format!("compat-{:016x}", hasher.finish()),
        ],
    )
    .map_err(|e| ExecError::EngineFailure(e.to_string()))
}
