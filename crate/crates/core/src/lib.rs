//! Limes core: a lightweight execution environment for serverless
//! WebAssembly functions.
//!
//! * [`executor`] compiles, caches, instantiates and interrupts functions.
//! * [`registry`] persists registered modules and their compiled artifacts.
//! * [`workloads`] describes the bundled evaluation functions and carries
//!   host-side reference implementations used to check them.

pub mod digest;
pub mod executor;
pub mod failpoint;
pub mod registry;
pub mod workloads;

pub use digest::ModuleHash;
pub use executor::{
    ColdStart, CompiledArtifact, ComponentHandle, EngineFingerprint, EpochConfig, ExecError, Executor,
    ExecutorConfig, FunctionInstance, InstanceState, InterruptHandle, SandboxPolicy, TimingBreakdown,
};

pub use registry::{ModuleDescriptor, ModuleState, Registry, RegistryError};
