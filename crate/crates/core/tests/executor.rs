mod common;

use std::time::{Duration, Instant};

use common::{executor, sandbox, timing_lock, wasm, workloads};
use limes_core::workloads::{Workload, BOGUS_IMPORT_FILE, IMAGE_OUTPUT_NAME};
use limes_core::{
    EngineFingerprint, EpochConfig, ExecError, Executor, ExecutorConfig, InstanceState, SandboxPolicy,
};
use proptest::prelude::*;

fn ro_policy(dir: &tempfile::TempDir) -> SandboxPolicy {
    SandboxPolicy::read_only(dir.path())
}

fn noop_instance() -> limes_core::FunctionInstance {
    let exec = executor();
    let dir = sandbox(Workload::Noop);
    let handle = exec.compile_component(&wasm(Workload::Noop)).unwrap();
    exec.instantiate(&handle, &ro_policy(&dir), EpochConfig::default()).unwrap()
}

#[test]
fn noop_echoes_input() {
    for input in [&b"hello"[..], b""] {
        let mut inst = noop_instance();
        assert_eq!(inst.state(), InstanceState::Ready);
        let (out, timing) = inst.invoke(input).unwrap();
        assert_eq!(out, input);
        assert_eq!(inst.state(), InstanceState::Finished);
        assert!(timing.total >= timing.cold_start + timing.execution);
        assert!(!timing.cache_hit);
    }
}

#[test]
fn empty_bytes_are_malformed() {
    let err = executor().compile_component(&[]).unwrap_err();
    assert_eq!(err.code(), "MalformedModule");
    let err = executor().compile_component(b"\0asm\x01\0\0\0").unwrap_err();
    assert_eq!(err.code(), "MalformedModule", "core modules are not components");
    let err = executor().compile_component(b"definitely not wasm").unwrap_err();
    assert_eq!(err.code(), "MalformedModule");
}

#[test]
fn component_without_run_is_missing_export() {
    let bytes = wat::parse_str("(component)").unwrap();
    let err = executor().compile_component(&bytes).unwrap_err();
    assert!(matches!(err, ExecError::MissingExport), "{err:?}");
}

#[test]
fn unsatisfied_import_is_a_link_error() {
    let bytes = std::fs::read(workloads().join(BOGUS_IMPORT_FILE)).unwrap();
    let exec = executor();
    let handle = exec.compile_component(&bytes).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let err = exec
        .instantiate(&handle, &ro_policy(&dir), EpochConfig::default())
        .unwrap_err();
    assert_eq!(err.code(), "LinkError", "{err}");
}

#[test]
fn missing_preopen_is_a_sandbox_error() {
    let exec = executor();
    let handle = exec.compile_component(&wasm(Workload::Noop)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let gone = dir.path().join("nope");
    let err = exec
        .instantiate(&handle, &SandboxPolicy::read_only(&gone), EpochConfig::default())
        .unwrap_err();
    assert_eq!(err.code(), "SandboxError");
}

#[test]
fn instance_runs_once() {
    let mut inst = noop_instance();
    inst.invoke(b"a").unwrap();
    let err = inst.invoke(b"b").unwrap_err();
    assert!(matches!(err, ExecError::InstanceReused { state: InstanceState::Finished }), "{err:?}");
}

#[test]
fn interrupting_an_idle_instance_is_not_running() {
    let mut inst = noop_instance();
    let handle = inst.interrupt_handle();
    assert!(matches!(handle.interrupt(), Err(ExecError::NotRunning { state: InstanceState::Ready })));
    inst.invoke(b"x").unwrap();
    assert!(matches!(handle.interrupt(), Err(ExecError::NotRunning { state: InstanceState::Finished })));
}

#[test]
fn spin_is_stopped_by_its_deadline() {
    let _g = timing_lock();
    let exec = executor();
    let handle = exec.compile_component(&wasm(Workload::Spin)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut inst = exec
        .instantiate(
            &handle,
            &ro_policy(&dir),
            EpochConfig::from_deadline(Duration::from_millis(50)).unwrap(),
        )
        .unwrap();
    let start = Instant::now();
    let err = inst.invoke(b"").unwrap_err();
    let took = start.elapsed();
    assert!(matches!(err, ExecError::Interrupted), "{err:?}");
    assert_eq!(inst.state(), InstanceState::Interrupted);
    assert!(took >= Duration::from_millis(50), "{took:?}");
    assert!(took < Duration::from_millis(250), "{took:?}");
}

#[test]
fn spin_is_stopped_by_its_handle() {
    let exec = executor();
    let handle = exec.compile_component(&wasm(Workload::Spin)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut inst = exec.instantiate(&handle, &ro_policy(&dir), EpochConfig::default()).unwrap();
    let stop = inst.interrupt_handle();
    let worker = std::thread::spawn(move || {
        let r = inst.invoke(b"");
        (r.map(|_| ()), inst.state())
    });
    while stop.state() != InstanceState::Running {
        std::thread::sleep(Duration::from_millis(1));
    }
    std::thread::sleep(Duration::from_millis(20));
    let sent = Instant::now();
    stop.interrupt().unwrap();
    let (result, state) = worker.join().unwrap();
    assert!(matches!(result, Err(ExecError::Interrupted)));
    assert_eq!(state, InstanceState::Interrupted);
    assert!(sent.elapsed() < Duration::from_secs(1));
}

#[test]
fn truncated_artifact_is_corrupt() {
    let exec = executor();
    let mut artifact = exec.compile_module(&wasm(Workload::Noop)).unwrap();
    artifact.blob.truncate(artifact.blob.len() / 2);
    let err = exec.load_artifact(&artifact).unwrap_err();
    assert_eq!(err.code(), "CorruptArtifact", "{err}");

    artifact.blob.clear();
    assert_eq!(exec.load_artifact(&artifact).unwrap_err().code(), "CorruptArtifact");
}

#[test]
fn any_fingerprint_field_mismatch_is_rejected() {
    let exec = executor();
    let artifact = exec.compile_module(&wasm(Workload::Noop)).unwrap();
    let fp = exec.fingerprint().clone();
    let flags = fp.feature_flags().to_vec();
    let mut fewer = flags.clone();
    fewer.pop();
    let variants = [
        EngineFingerprint::new("v8", &fp.engine_version, &fp.target_triple, flags.clone()),
        EngineFingerprint::new(&fp.engine_name, "48.0.0", &fp.target_triple, flags.clone()),
        EngineFingerprint::new(&fp.engine_name, &fp.engine_version, "riscv64gc-unknown-linux-gnu", flags),
        EngineFingerprint::new(&fp.engine_name, &fp.engine_version, &fp.target_triple, fewer),
    ];
    for other in variants {
        let mut doctored = artifact.clone();
        doctored.fingerprint = other.unwrap();
        let err = exec.load_artifact(&doctored).unwrap_err();
        assert_eq!(err.code(), "FingerprintMismatch", "{err}");
    }
}

#[test]
fn cached_cold_start_does_not_compile() {
    // Own executor: the shared one compiles concurrently in other tests.
    let exec = Executor::new(ExecutorConfig::default()).unwrap();
    let bytes = wasm(Workload::Noop);
    let artifact = exec.compile_module(&bytes).unwrap();
    let dir = sandbox(Workload::Noop);
    let before = exec.compile_count();
    let cold = exec
        .measure_cold_start(&bytes, &ro_policy(&dir), EpochConfig::default(), Some(&artifact))
        .unwrap();
    assert!(cold.cache_hit);
    assert_eq!(exec.compile_count(), before);
    let mut inst = cold.instance;
    let (out, timing) = inst.invoke(b"cached").unwrap();
    assert_eq!(out, b"cached");
    assert!(timing.cache_hit);
}

#[test]
fn foreign_artifact_falls_back_to_compiling() {
    // Own executor: the shared one compiles concurrently in other tests.
    let exec = Executor::new(ExecutorConfig::default()).unwrap();
    let other = exec.compile_module(&wasm(Workload::Spin)).unwrap();
    let dir = sandbox(Workload::Noop);
    let before = exec.compile_count();
    let cold = exec
        .measure_cold_start(&wasm(Workload::Noop), &ro_policy(&dir), EpochConfig::default(), Some(&other))
        .unwrap();
    assert!(!cold.cache_hit);
    assert_eq!(exec.compile_count(), before + 1);
}

fn median(mut v: Vec<Duration>) -> Duration {
    v.sort();
    v[(v.len() + 1) / 2 - 1]
}

/// Paired JIT and cached cold starts, 50 trials per bundled workload.
#[test]
fn cache_hits_are_faster_than_compiling() {
    let _g = timing_lock();
    let exec = executor();
    let mut jit_medians = Vec::new();
    for w in Workload::BENCH {
        let bytes = wasm(w);
        let artifact = exec.compile_module(&bytes).unwrap();
        let dir = sandbox(w);
        let policy = ro_policy(&dir);
        let (mut jit, mut cached) = (Vec::new(), Vec::new());
        for _ in 0..50 {
            let c = exec.measure_cold_start(&bytes, &policy, EpochConfig::default(), None).unwrap();
            assert!(!c.cache_hit);
            jit.push(c.cold_start);
            let c = exec
                .measure_cold_start(&bytes, &policy, EpochConfig::default(), Some(&artifact))
                .unwrap();
            assert!(c.cache_hit);
            cached.push(c.cold_start);
        }
        let (jit, cached) = (median(jit), median(cached));
        assert!(cached < jit, "{w}: cached {cached:?} vs jit {jit:?}");
        jit_medians.push((w, jit));
    }
    let noop = jit_medians[0].1;
    let image = jit_medians.iter().find(|(w, _)| *w == Workload::Image).unwrap().1;
    assert!(noop < image, "noop {noop:?} vs image {image:?}");
}

fn snapshot(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut all: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    all.sort();
    all
}

#[test]
fn read_only_sandbox_blocks_writes() {
    let exec = executor();
    let dir = sandbox(Workload::ImageIo);
    let before = snapshot(dir.path());
    let handle = exec.compile_component(&wasm(Workload::ImageIo)).unwrap();
    let mut inst = exec.instantiate(&handle, &ro_policy(&dir), EpochConfig::default()).unwrap();
    let err = inst.invoke(&Workload::ImageIo.default_input()).unwrap_err();
    assert_eq!(err.code(), "GuestError", "{err}");
    assert_eq!(snapshot(dir.path()), before);
    assert!(!dir.path().join(IMAGE_OUTPUT_NAME).exists());
}

#[test]
fn read_write_sandbox_receives_output() {
    let exec = executor();
    let dir = sandbox(Workload::ImageIo);
    let handle = exec.compile_component(&wasm(Workload::ImageIo)).unwrap();
    let mut inst = exec
        .instantiate(&handle, &SandboxPolicy::read_write(dir.path()), EpochConfig::default())
        .unwrap();
    let (out, _) = inst.invoke(&Workload::ImageIo.default_input()).unwrap();
    let written = std::fs::read(dir.path().join(IMAGE_OUTPUT_NAME)).unwrap();
    assert_eq!(written, out);
}

#[test]
fn guest_cannot_escape_its_root() {
    let exec = executor();
    let outer = tempfile::tempdir().unwrap();
    std::fs::write(outer.path().join("secret.png"), b"not for guests").unwrap();
    let inner = outer.path().join("box");
    std::fs::create_dir(&inner).unwrap();
    let handle = exec.compile_component(&wasm(Workload::Image)).unwrap();
    for path in ["/../secret.png", "../secret.png", "/secret.png"] {
        let mut inst = exec
            .instantiate(&handle, &SandboxPolicy::read_write(&inner), EpochConfig::default())
            .unwrap();
        let job = format!(r#"{{"input_path":"{path}","filters":["invert"]}}"#);
        let err = inst.invoke(job.as_bytes()).unwrap_err();
        assert_eq!(err.code(), "GuestError", "{path}: {err}");
    }
}

#[test]
fn guest_errors_are_reported() {
    let exec = executor();
    let handle = exec.compile_component(&wasm(Workload::Mandelbrot)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut inst = exec.instantiate(&handle, &ro_policy(&dir), EpochConfig::default()).unwrap();
    let err = inst.invoke(br#"{"max_iter":0}"#).unwrap_err();
    assert!(matches!(err, ExecError::GuestError(_)), "{err:?}");
    assert_eq!(inst.state(), InstanceState::Failed);
    assert!(inst.timing().is_some());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn noop_is_identity(input in proptest::collection::vec(any::<u8>(), 0..(1 << 20))) {
        let mut inst = noop_instance();
        let (out, _) = inst.invoke(&input).unwrap();
        prop_assert_eq!(out, input);
    }

    /// Random call sequences never leave an instance outside its lifecycle.
    #[test]
    fn lifecycle_is_one_way(ops in proptest::collection::vec(0u8..3, 1..6)) {
        let mut inst = noop_instance();
        let handle = inst.interrupt_handle();
        let mut invoked = false;
        for op in ops {
            match op {
                0 => {
                    let r = inst.invoke(b"p");
                    if invoked {
                        prop_assert!(
                            matches!(r, Err(ExecError::InstanceReused { .. })),
                            "second invoke should be rejected"
                        );
                    } else {
                        prop_assert!(r.is_ok());
                    }
                    invoked = true;
                }
                1 => {
                    let refused = matches!(handle.interrupt(), Err(ExecError::NotRunning { .. }));
                    prop_assert!(refused, "interrupt outside a call should be refused");
                }
                _ => {
                    let expect = if invoked { InstanceState::Finished } else { InstanceState::Ready };
                    prop_assert_eq!(inst.state(), expect);
                }
            }
        }
    }
}
