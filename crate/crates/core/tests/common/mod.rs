#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard, OnceLock};

use limes_core::workloads::{self, Workload};
use limes_core::{Executor, ExecutorConfig};

pub fn workloads() -> PathBuf {
    workloads::workloads_dir()
}

pub fn wasm(w: Workload) -> Vec<u8> {
    w.load(&workloads()).unwrap_or_else(|e| panic!("{w} component missing; run guests/build.sh: {e}"))
}

pub fn executor() -> Arc<Executor> {
    static EXEC: OnceLock<Arc<Executor>> = OnceLock::new();
    EXEC.get_or_init(|| Arc::new(Executor::new(ExecutorConfig::default()).unwrap()))
        .clone()
}

/// Serializes latency-sensitive tests within one test binary.
pub fn timing_lock() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

/// A sandbox directory seeded with the files `w` reads.
pub fn sandbox(w: Workload) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    workloads::seed_sandbox(w, &workloads(), dir.path()).unwrap();
    dir
}
