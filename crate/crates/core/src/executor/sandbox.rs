use std::path::{Path, PathBuf};

use wasmtime::component::ResourceTable;
use wasmtime_wasi::p2::pipe::{MemoryInputPipe, MemoryOutputPipe};
use wasmtime_wasi::{FsPerms, WasiCtx, WasiCtxBuilder, WasiCtxView, WasiView};

use super::ExecError;

/// Path under which the guest sees `preopen_dir`.
pub const GUEST_ROOT: &str = "/";

const STDOUT_CAPACITY: usize = 4 << 20;

/// Host resources granted to one function instance.
#[derive(Clone, Debug)]
pub struct SandboxPolicy {
    pub preopen_dir: PathBuf,
    pub allow_writes: bool,
    pub stdin_bytes: Vec<u8>,
    pub capture_stdout: bool,
    pub env_vars: Vec<(String, String)>,
}

impl SandboxPolicy {
    pub fn read_only(dir: impl Into<PathBuf>) -> Self {
        SandboxPolicy {
            preopen_dir: dir.into(),
            allow_writes: false,
            stdin_bytes: Vec::new(),
            capture_stdout: false,
            env_vars: Vec::new(),
        }
    }

    pub fn read_write(dir: impl Into<PathBuf>) -> Self {
        SandboxPolicy {
            allow_writes: true,
            ..SandboxPolicy::read_only(dir)
        }
    }

    pub fn with_env(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.env_vars.push((key.into(), value.into()));
        self
    }
}

pub(crate) struct HostState {
    wasi: WasiCtx,
    table: ResourceTable,
}

impl WasiView for HostState {
    fn ctx(&mut self) -> WasiCtxView<'_> {
        WasiCtxView {
            ctx: &mut self.wasi,
            table: &mut self.table,
        }
    }
}

fn check_dir(dir: &Path) -> Result<(), ExecError> {
    match std::fs::metadata(dir) {
        Ok(m) if m.is_dir() => Ok(()),
        Ok(_) => Err(ExecError::Sandbox(format!("{} is not a directory", dir.display()))),
        Err(e) => Err(ExecError::Sandbox(format!("{}: {e}", dir.display()))),
    }
}

pub(crate) fn build_host_state(
    policy: &SandboxPolicy,
) -> Result<(HostState, Option<MemoryOutputPipe>), ExecError> {
    check_dir(&policy.preopen_dir)?;
    let mut builder = WasiCtxBuilder::new();
    let perms = if policy.allow_writes {
        FsPerms::ReadWrite
    } else {
        FsPerms::ReadOnly
    };
    builder
        .preopened_dir(&policy.preopen_dir, GUEST_ROOT, perms)
        .map_err(|e| ExecError::Sandbox(format!("{}: {e}", policy.preopen_dir.display())))?;
    builder
        .allow_tcp(false)
        .allow_udp(false)
        .allow_ip_name_lookup(false);
    if !policy.stdin_bytes.is_empty() {
        builder.stdin(MemoryInputPipe::new(policy.stdin_bytes.clone()));
    }
    let stdout = policy.capture_stdout.then(|| MemoryOutputPipe::new(STDOUT_CAPACITY));
    if let Some(pipe) = &stdout {
        builder.stdout(pipe.clone());
    }
    for (k, v) in &policy.env_vars {
        builder.env(k, v);
    }
    let state = HostState {
        wasi: builder.build(),
        table: ResourceTable::new(),
    };
    Ok((state, stdout))
}
