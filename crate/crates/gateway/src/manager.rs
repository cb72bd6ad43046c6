//! Runtime manager: admission control, registry lookups and the blocking
//! execution of each invocation.

use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use limes_core::registry::RegistryCounters;
use limes_core::{EpochConfig, ExecError, Executor, InstanceState, ModuleDescriptor, ModuleHash, Registry, RegistryError, SandboxPolicy};
use serde::Serialize;
use tokio::sync::Semaphore;
use uuid::Uuid;

use crate::config::{ServiceConfig, RECORD_CAPACITY};
use crate::records::{ErrorBody, InvocationRecord, InvocationStatus, RecordTable, StopOutcome, TimingMs};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("unknown module {0}")]
    UnknownModuleId(String),
    #[error("unknown invocation {0}")]
    UnknownInvocation(String),
    #[error("invocation id {0} already in use")]
    DuplicateInvocation(Uuid),
    #[error("too many concurrent invocations (limit {0})")]
    Busy(usize),
    #[error("{0}")]
    BadRequest(String),
    #[error("internal error: {0}")]
    Internal(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Metrics {
    pub compile_count: u64,
    pub hit_count: u64,
    pub in_flight: usize,
}

pub struct RuntimeManager {
    config: ServiceConfig,
    registry: Arc<Registry>,
    gate: Arc<Semaphore>,
    records: Arc<RecordTable>,
}

impl RuntimeManager {
    pub fn new(config: ServiceConfig, registry: Arc<Registry>) -> Self {
        RuntimeManager {
            gate: Arc::new(Semaphore::new(config.max_concurrent_invocations)),
            records: Arc::new(RecordTable::new(RECORD_CAPACITY)),
            config,
            registry,
        }
    }

    /// Opens the registry in `config.data_dir` with a fresh executor.
    pub fn open(config: ServiceConfig) -> anyhow::Result<Self> {
        config.validate()?;
        let executor = Arc::new(Executor::new(Default::default())?);
        let registry = Arc::new(Registry::open(&config.data_dir, executor)?);
        Ok(RuntimeManager::new(config, registry))
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn registry(&self) -> &Arc<Registry> {
        &self.registry
    }

    pub fn metrics(&self) -> Metrics {
        let RegistryCounters {
            compile_count,
            hit_count,
        } = self.registry.counters();
        Metrics {
            compile_count,
            hit_count,
            in_flight: self.in_flight(),
        }
    }

    pub fn in_flight(&self) -> usize {
        self.config.max_concurrent_invocations - self.gate.available_permits()
    }

    pub async fn register(&self, wasm: Vec<u8>, name: String) -> Result<ModuleDescriptor, ServiceError> {
        let registry = self.registry.clone();
        blocking(move || registry.register(&wasm, &name).map_err(Into::into)).await
    }

    pub async fn initialize(&self, id: ModuleHash) -> Result<ModuleDescriptor, ServiceError> {
        let registry = self.registry.clone();
        blocking(move || registry.initialize(&id).map_err(Into::into)).await
    }

    pub fn list_modules(&self) -> Vec<ModuleDescriptor> {
        self.registry.list_modules()
    }

    pub fn status(&self, id: &Uuid) -> Option<InvocationRecord> {
        self.records.get(id)
    }

    pub fn stop(&self, id: &Uuid) -> Result<InvocationRecord, ServiceError> {
        match self.records.request_stop(id) {
            StopOutcome::Unknown => Err(ServiceError::UnknownInvocation(id.to_string())),
            StopOutcome::Signal(record, handle) => {
                match handle.interrupt() {
                    Ok(()) => {}
                    // Marked running but not yet inside the guest call.
                    Err(ExecError::NotRunning {
                        state: InstanceState::Ready,
                    }) => {
                        std::thread::spawn(move || {
                            while handle.state() == InstanceState::Ready {
                                std::thread::sleep(Duration::from_millis(1));
                            }
                            let _ = handle.interrupt();
                        });
                    }
                    // Losing the race against natural completion is fine.
                    Err(e) => log::debug!("stop {id}: {e}"),
                }
                Ok(record)
            }
            StopOutcome::Deferred(record) | StopOutcome::AlreadyTerminal(record) => Ok(record),
        }
    }

    /// Runs `module_id` on `input` and returns the terminal record. Guest
    /// failures and interruptions are reported in the record, not as errors.
    pub async fn invoke(
        &self,
        module_id: ModuleHash,
        input: Vec<u8>,
        deadline_ms: Option<u64>,
        invocation_id: Option<Uuid>,
    ) -> Result<InvocationRecord, ServiceError> {
        let permit = self
            .gate
            .clone()
            .try_acquire_owned()
            .map_err(|_| ServiceError::Busy(self.config.max_concurrent_invocations))?;
        if self.registry.descriptor(&module_id).is_none() {
            return Err(RegistryError::UnknownModule(module_id).into());
        }
        let deadline_ms = deadline_ms.unwrap_or(self.config.default_deadline_ms);
        if deadline_ms == 0 {
            return Err(ServiceError::BadRequest("deadline_ms must be positive".into()));
        }
        let epochs = EpochConfig::from_deadline(Duration::from_millis(deadline_ms))
            .map_err(|e| ServiceError::BadRequest(e.to_string()))?;
        let invocation_id = invocation_id.unwrap_or_else(Uuid::new_v4);
        let record = InvocationRecord::pending(invocation_id, module_id, input.clone(), deadline_ms);
        if !self.records.insert(record) {
            return Err(ServiceError::DuplicateInvocation(invocation_id));
        }

        let job = Job {
            registry: self.registry.clone(),
            records: self.records.clone(),
            seed_dir: self.config.seed_dir.clone(),
            allow_writes: self.config.allow_writes,
            invocation_id,
            module_id,
            input,
            epochs,
        };
        let result = tokio::task::spawn_blocking(move || {
            let _permit = permit;
            job.run()
        })
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?;
        Ok(result)
    }

    /// Waits until no invocation is in flight or `timeout` expires.
    pub async fn drain(&self, timeout: Duration) -> bool {
        let max = self.config.max_concurrent_invocations as u32;
        match tokio::time::timeout(timeout, self.gate.acquire_many(max)).await {
            Ok(Ok(_all)) => true,
            _ => false,
        }
    }
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ServiceError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?
}

struct Job {
    registry: Arc<Registry>,
    records: Arc<RecordTable>,
    seed_dir: Option<std::path::PathBuf>,
    allow_writes: bool,
    invocation_id: Uuid,
    module_id: ModuleHash,
    input: Vec<u8>,
    epochs: EpochConfig,
}

fn error_body(code: &str, message: impl ToString) -> ErrorBody {
    ErrorBody {
        code: code.to_string(),
        message: message.to_string(),
    }
}

fn seed(from: &Path, to: &Path) -> std::io::Result<()> {
    for entry in std::fs::read_dir(from)? {
        let entry = entry?;
        if entry.file_type()?.is_file() {
            std::fs::copy(entry.path(), to.join(entry.file_name()))?;
        }
    }
    Ok(())
}

impl Job {
    fn fail(&self, code: &str, message: impl ToString) -> InvocationRecord {
        self.finish(InvocationStatus::Failed, None, Err(error_body(code, message)))
    }

    fn finish(
        &self,
        status: InvocationStatus,
        timing: Option<TimingMs>,
        body: Result<Vec<u8>, ErrorBody>,
    ) -> InvocationRecord {
        if let Some(r) = self.records.finish(&self.invocation_id, status, timing, body.clone()) {
            return r;
        }
        // Evicted from the ring buffer while running.
        let mut r = InvocationRecord::pending(self.invocation_id, self.module_id, self.input.clone(), 0);
        r.status = status;
        r.timing = timing;
        match body {
            Ok(out) => r.output = Some(out),
            Err(e) => r.error = Some(e),
        }
        r
    }

    fn run(self) -> InvocationRecord {
        // Fresh per-invocation directory, removed when `sandbox` drops.
        let sandbox = match tempfile::Builder::new().prefix("limes-sandbox-").tempdir() {
            Ok(dir) => dir,
            Err(e) => return self.fail("SandboxError", e),
        };
        if let Some(seed_dir) = &self.seed_dir {
            if let Err(e) = seed(seed_dir, sandbox.path()) {
                return self.fail("SandboxError", format!("seeding sandbox: {e}"));
            }
        }
        let policy = SandboxPolicy {
            allow_writes: self.allow_writes,
            ..SandboxPolicy::read_only(sandbox.path())
        };

        let request_start = Instant::now();
        let loaded = match self.registry.load(&self.module_id) {
            Ok(l) => l,
            Err(e) => return self.fail(e.code(), e),
        };
        let executor = self.registry.executor();
        let mut instance =
            match executor.instantiate_from(&loaded.handle, &policy, self.epochs, request_start, loaded.cache_hit) {
                Ok(i) => i,
                Err(e) => return self.fail(e.code(), e),
            };

        if !self.records.mark_running(&self.invocation_id, instance.interrupt_handle()) {
            let timing = TimingMs {
                cold_start_ms: instance.cold_start().as_secs_f64() * 1e3,
                execution_ms: 0.0,
                total_ms: request_start.elapsed().as_secs_f64() * 1e3,
                cache_hit: instance.cache_hit(),
            };
            return self.finish(
                InvocationStatus::Interrupted,
                Some(timing),
                Err(error_body("Interrupted", "stopped before execution")),
            );
        }

        let result = instance.invoke(&self.input);
        let timing = instance.timing().map(TimingMs::from);
        let (status, timing, body) = match result {
            Ok((output, _)) => (InvocationStatus::Finished, timing, Ok(output)),
            Err(e @ ExecError::Interrupted) => {
                (InvocationStatus::Interrupted, timing, Err(error_body(e.code(), e)))
            }
            Err(e) => (InvocationStatus::Failed, None, Err(error_body(e.code(), e))),
        };
        self.finish(status, timing, body)
    }
}
