//! Sequential latency sampling against one shared executor.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use limes_core::workloads::{self, Workload};
use limes_core::{CompiledArtifact, EpochConfig, ExecError, Executor, SandboxPolicy};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

use crate::plan::{BenchmarkPlan, Mode};

/// Bytes of random payload sent to the no-op function.
pub const NOOP_PAYLOAD_LEN: usize = 64;

#[derive(Clone, Debug)]
pub struct LatencySamples {
    pub plan: BenchmarkPlan,
    pub values_ms: Vec<f64>,
    pub warmup_ms: Vec<f64>,
    pub recorded_at: DateTime<Utc>,
    pub host_info: String,
    /// Set when an error stopped the run before `plan.iterations` samples.
    pub aborted: bool,
    /// JIT compilations performed by the executor during the sampled
    /// iterations (warmup excluded).
    pub compiles: u64,
}

impl LatencySamples {
    fn empty(plan: &BenchmarkPlan, host_info: String) -> Self {
        LatencySamples {
            plan: plan.clone(),
            values_ms: Vec::with_capacity(plan.iterations as usize),
            warmup_ms: Vec::with_capacity(plan.warmup_iterations as usize),
            recorded_at: Utc::now(),
            host_info,
            aborted: false,
            compiles: 0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("cannot prepare {workload}: {reason}")]
    Setup { workload: Workload, reason: String },
    #[error("{} aborted after {} samples: {reason}", partial.plan, partial.values_ms.len())]
    Aborted { partial: Box<LatencySamples>, reason: String },
}

pub struct Harness {
    executor: Arc<Executor>,
    workloads_dir: PathBuf,
    seed: u64,
}

impl Harness {
    pub fn new(executor: Arc<Executor>, workloads_dir: impl Into<PathBuf>) -> Self {
        Harness {
            executor,
            workloads_dir: workloads_dir.into(),
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn executor(&self) -> &Arc<Executor> {
        &self.executor
    }

    pub fn workloads_dir(&self) -> &Path {
        &self.workloads_dir
    }

    /// The payload every iteration of `workload` receives.
    pub fn input_for(&self, workload: Workload) -> Vec<u8> {
        match workload {
            Workload::Noop => {
                let mut bytes = vec![0u8; NOOP_PAYLOAD_LEN];
                ChaCha8Rng::seed_from_u64(self.seed).fill_bytes(&mut bytes);
                bytes
            }
            w => w.default_input(),
        }
    }

    pub fn host_info(&self) -> String {
        let cpus = std::thread::available_parallelism().map_or(0, |n| n.get());
        format!(
            "{} {} cpus={} {} {}",
            std::env::consts::OS,
            std::env::consts::ARCH,
            cpus,
            self.executor.fingerprint().engine_name,
            self.executor.fingerprint().engine_version,
        )
    }

    pub fn run(&self, plan: &BenchmarkPlan) -> Result<LatencySamples, BenchError> {
        match plan.mode {
            Mode::ColdJit | Mode::ColdCached => self.run_cold_start_bench(plan),
            Mode::Execution => self.run_execution_bench(plan),
        }
    }

    /// Each iteration gets a new store and sandbox and records the time from
    /// the compile (or artifact load) call until the instance is ready.
    pub fn run_cold_start_bench(&self, plan: &BenchmarkPlan) -> Result<LatencySamples, BenchError> {
        if !plan.mode.is_cold_start() {
            return Err(BenchError::InvalidPlan(format!("{plan}: not a cold-start mode")));
        }
        plan.validate().map_err(BenchError::InvalidPlan)?;
        let wasm = self.load(plan.workload)?;
        let store = match plan.mode {
            Mode::ColdCached => Some(self.write_artifact(plan.workload, &wasm)?),
            _ => None,
        };
        let expect_hit = store.is_some();

        self.sample(plan, || {
            let sandbox = self.sandbox(plan.workload)?;
            let artifact = match &store {
                Some(s) => Some(s.read()?),
                None => None,
            };
            let policy = SandboxPolicy::read_write(sandbox.path());
            let cold = self
                .executor
                .measure_cold_start(&wasm, &policy, EpochConfig::default(), artifact.as_ref())
                .map_err(describe)?;
            if cold.cache_hit != expect_hit {
                return Err("serialized artifact was rejected".to_string());
            }
            Ok(cold.cold_start)
        })
    }

    /// Each iteration starts an instance from the serialized artifact outside
    /// the timed window and records only the invoke call.
    pub fn run_execution_bench(&self, plan: &BenchmarkPlan) -> Result<LatencySamples, BenchError> {
        if plan.mode != Mode::Execution {
            return Err(BenchError::InvalidPlan(format!("{plan}: not the execution mode")));
        }
        plan.validate().map_err(BenchError::InvalidPlan)?;
        let wasm = self.load(plan.workload)?;
        let store = self.write_artifact(plan.workload, &wasm)?;
        let artifact = store.read().map_err(|reason| BenchError::Setup {
            workload: plan.workload,
            reason,
        })?;
        let input = self.input_for(plan.workload);

        self.sample(plan, || {
            let sandbox = self.sandbox(plan.workload)?;
            let policy = SandboxPolicy::read_write(sandbox.path());
            let mut instance = self
                .executor
                .measure_cold_start(&wasm, &policy, EpochConfig::default(), Some(&artifact))
                .map_err(describe)?
                .instance;
            let (_, timing) = instance.invoke(&input).map_err(describe)?;
            Ok(timing.execution)
        })
    }

    fn sample(
        &self,
        plan: &BenchmarkPlan,
        mut once: impl FnMut() -> Result<Duration, String>,
    ) -> Result<LatencySamples, BenchError> {
        let mut out = LatencySamples::empty(plan, self.host_info());
        let abort = |mut out: LatencySamples, reason: String| {
            out.aborted = true;
            BenchError::Aborted {
                partial: Box::new(out),
                reason,
            }
        };
        for _ in 0..plan.warmup_iterations {
            match once() {
                Ok(d) => out.warmup_ms.push(millis(d)),
                Err(reason) => return Err(abort(out, reason)),
            }
        }
        let before = self.executor.compile_count();
        for i in 0..plan.iterations {
            match once() {
                Ok(d) => out.values_ms.push(millis(d)),
                Err(reason) => {
                    out.compiles = self.executor.compile_count() - before;
                    return Err(abort(out, format!("iteration {}: {reason}", i + 1)));
                }
            }
        }
        out.compiles = self.executor.compile_count() - before;
        out.recorded_at = Utc::now();
        Ok(out)
    }

    fn load(&self, workload: Workload) -> Result<Vec<u8>, BenchError> {
        workload.load(&self.workloads_dir).map_err(|e| BenchError::Setup {
            workload,
            reason: format!("{}: {e}", self.workloads_dir.join(workload.file_name()).display()),
        })
    }

    fn sandbox(&self, workload: Workload) -> Result<TempDir, String> {
        let dir = tempfile::tempdir().map_err(|e| format!("sandbox: {e}"))?;
        workloads::seed_sandbox(workload, &self.workloads_dir, dir.path()).map_err(|e| format!("sandbox: {e}"))?;
        Ok(dir)
    }

    fn write_artifact(&self, workload: Workload, wasm: &[u8]) -> Result<ArtifactFile, BenchError> {
        let setup = |reason: String| BenchError::Setup { workload, reason };
        let artifact = self.executor.compile_module(wasm).map_err(|e| setup(describe(e)))?;
        let dir = tempfile::tempdir().map_err(|e| setup(e.to_string()))?;
        let path = dir.path().join(format!("{}.limesart", artifact.source_hash.to_hex()));
        std::fs::write(&path, artifact.encode()).map_err(|e| setup(e.to_string()))?;
        Ok(ArtifactFile {
            _dir: dir,
            path,
            source_hash: artifact.source_hash,
            created_at: artifact.created_at,
        })
    }
}

/// A serialized artifact kept on disk for the duration of one plan.
struct ArtifactFile {
    _dir: TempDir,
    path: PathBuf,
    source_hash: limes_core::ModuleHash,
    created_at: DateTime<Utc>,
}

impl ArtifactFile {
    fn read(&self) -> Result<CompiledArtifact, String> {
        let bytes = std::fs::read(&self.path).map_err(|e| format!("{}: {e}", self.path.display()))?;
        CompiledArtifact::decode(&bytes, self.source_hash, self.created_at).map_err(|e| e.to_string())
    }
}

fn describe(e: ExecError) -> String {
    format!("{}: {e}", e.code())
}

fn millis(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}
