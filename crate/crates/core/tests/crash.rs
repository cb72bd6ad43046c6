//! Kills a child process at each registry write step and checks the data
//! directory it leaves behind.

mod common;

use std::path::Path;
use std::process::Command;
use std::sync::Arc;

use common::wasm;
use limes_core::workloads::Workload;
use limes_core::{CompiledArtifact, Executor, ExecutorConfig, ModuleHash, ModuleState, Registry};

const DIR_ENV: &str = "LIMES_CRASH_TEST_DIR";
const MODULE_ENV: &str = "LIMES_CRASH_TEST_MODULE";

const KILL_POINTS: [&str; 6] = [
    "artifact:partial-write",
    "artifact:before-rename",
    "artifact:after-rename",
    "index:partial-write",
    "index:before-rename",
    "index:after-rename",
];

fn open(dir: &Path) -> Registry {
    Registry::open(dir, Arc::new(Executor::new(ExecutorConfig::default()).unwrap())).unwrap()
}

/// Child side: does nothing unless launched by `kill_during_initialize`.
#[test]
fn crash_child() {
    let (Some(dir), Some(id)) = (std::env::var_os(DIR_ENV), std::env::var(MODULE_ENV).ok()) else {
        return;
    };
    let reg = open(Path::new(&dir));
    reg.initialize(&id.parse().unwrap()).unwrap();
}

/// Every entry that names an artifact must point at a decodable artifact of
/// this engine.
fn check_index(dir: &Path, fingerprint: &limes_core::EngineFingerprint) {
    let raw: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("index.json")).unwrap())
        .expect("index.json is valid JSON");
    for entry in raw["entries"].as_array().unwrap() {
        let Some(rel) = entry["artifact_path"].as_str() else {
            assert_eq!(entry["state"], "Registered");
            continue;
        };
        let id: ModuleHash = entry["module_id"].as_str().unwrap().parse().unwrap();
        let bytes = std::fs::read(dir.join(rel)).expect("indexed artifact exists");
        let artifact = CompiledArtifact::decode(&bytes, id, chrono::Utc::now()).expect("indexed artifact decodes");
        assert_eq!(&artifact.fingerprint, fingerprint);
    }
}

#[test]
fn kill_during_initialize() {
    let exe = std::env::current_exe().unwrap();
    for point in KILL_POINTS {
        for preinit in [false, true] {
            let dir = tempfile::tempdir().unwrap();
            let reg = open(dir.path());
            let id = reg.register(&wasm(Workload::Noop), "noop").unwrap().module_id;
            let other = reg.register(&wasm(Workload::Spin), "spin").unwrap().module_id;
            if preinit {
                reg.initialize(&other).unwrap();
            }
            let fingerprint = reg.executor().fingerprint().clone();
            drop(reg);

            let status = Command::new(&exe)
                .args(["--exact", "crash_child", "--test-threads", "1", "--nocapture"])
                .env(DIR_ENV, dir.path())
                .env(MODULE_ENV, id.to_hex())
                .env(limes_core::failpoint::ENV, point)
                .status()
                .unwrap();
            assert!(!status.success(), "{point}: child was expected to abort");

            check_index(dir.path(), &fingerprint);
            let reg = open(dir.path());
            check_index(dir.path(), &fingerprint);
            for d in reg.list_modules() {
                if d.state == ModuleState::Initialized {
                    assert!(reg.get_or_compile(&d.module_id).unwrap().1, "{point}: {} should hit", d.name);
                }
            }
            let d = reg.initialize(&id).unwrap();
            assert_eq!(d.state, ModuleState::Initialized, "{point}");
            let leftovers: Vec<_> = std::fs::read_dir(dir.path().join("artifacts"))
                .unwrap()
                .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
                .filter(|n| n.contains(".tmp-"))
                .collect();
            assert!(leftovers.is_empty(), "{point}: {leftovers:?}");
        }
    }
}
