use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicU8, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use uuid::Uuid;
use wasmtime::{Engine, Store, Trap};
use wasmtime_wasi::p2::pipe::MemoryOutputPipe;

use super::bindings::Function;
use super::sandbox::HostState;
use super::{EpochConfig, ExecError};
use crate::digest::ModuleHash;

/// Lifecycle of a [`FunctionInstance`]. Only moves forward:
/// `Ready -> Running -> {Finished, Interrupted, Failed}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum InstanceState {
    Ready = 0,
    Running = 1,
    Finished = 2,
    Interrupted = 3,
    Failed = 4,
}

impl InstanceState {
    fn from_u8(v: u8) -> Self {
        match v {
            0 => InstanceState::Ready,
            1 => InstanceState::Running,
            2 => InstanceState::Finished,
            3 => InstanceState::Interrupted,
            _ => InstanceState::Failed,
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            InstanceState::Finished | InstanceState::Interrupted | InstanceState::Failed
        )
    }
}

impl fmt::Display for InstanceState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Cold-start and execution durations of one request, monotonic clock.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TimingBreakdown {
    pub cold_start: Duration,
    pub execution: Duration,
    /// Cold start plus the whole `invoke` call, host dispatch included.
    pub total: Duration,
    pub cache_hit: bool,
}

pub(crate) struct Shared {
    state: AtomicU8,
    interrupt: AtomicBool,
    deadline: Mutex<Option<Instant>>,
}

impl Shared {
    pub(crate) fn new() -> Arc<Self> {
        Arc::new(Shared {
            state: AtomicU8::new(InstanceState::Ready as u8),
            interrupt: AtomicBool::new(false),
            deadline: Mutex::new(None),
        })
    }

    fn state(&self) -> InstanceState {
        InstanceState::from_u8(self.state.load(Ordering::SeqCst))
    }

    pub(crate) fn arm_deadline(&self, budget: Duration) {
        *self.deadline.lock().unwrap() = Instant::now().checked_add(budget);
    }

    /// Polled from the engine's epoch callback.
    pub(crate) fn should_stop(&self) -> bool {
        if self.interrupt.load(Ordering::SeqCst) {
            return true;
        }
        match *self.deadline.lock().unwrap() {
            Some(at) => Instant::now() >= at,
            None => false,
        }
    }
}

/// Signals a running instance from another thread.
#[derive(Clone)]
pub struct InterruptHandle {
    shared: Arc<Shared>,
    engine: Engine,
}

impl InterruptHandle {
    pub fn state(&self) -> InstanceState {
        self.shared.state()
    }

    /// Fails with `NotRunning` unless the instance is currently inside `invoke`.
    pub fn interrupt(&self) -> Result<(), ExecError> {
        let state = self.shared.state();
        if state != InstanceState::Running {
            return Err(ExecError::NotRunning { state });
        }
        self.shared.interrupt.store(true, Ordering::SeqCst);
        // Push the epoch past the store deadline so the guest checks now
        // rather than at the next tick.
        self.engine.increment_epoch();
        Ok(())
    }
}

impl fmt::Debug for InterruptHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InterruptHandle").field("state", &self.state()).finish()
    }
}

/// An instantiated module, good for exactly one `invoke`.
pub struct FunctionInstance {
    instance_id: Uuid,
    module_hash: ModuleHash,
    ready_at: Instant,
    cold_start: Duration,
    cache_hit: bool,
    epochs: EpochConfig,
    shared: Arc<Shared>,
    store: Store<HostState>,
    bindings: Function,
    stdout: Option<MemoryOutputPipe>,
    timing: Option<TimingBreakdown>,
}

pub(crate) struct InstanceParts {
    pub module_hash: ModuleHash,
    pub ready_at: Instant,
    pub cold_start: Duration,
    pub cache_hit: bool,
    pub epochs: EpochConfig,
    pub shared: Arc<Shared>,
    pub store: Store<HostState>,
    pub bindings: Function,
    pub stdout: Option<MemoryOutputPipe>,
}

impl FunctionInstance {
    pub(crate) fn from_parts(p: InstanceParts) -> Self {
        FunctionInstance {
            instance_id: Uuid::new_v4(),
            module_hash: p.module_hash,
            ready_at: p.ready_at,
            cold_start: p.cold_start,
            cache_hit: p.cache_hit,
            epochs: p.epochs,
            shared: p.shared,
            store: p.store,
            bindings: p.bindings,
            stdout: p.stdout,
            timing: None,
        }
    }

    pub fn instance_id(&self) -> Uuid {
        self.instance_id
    }

    pub fn module_hash(&self) -> ModuleHash {
        self.module_hash
    }

    pub fn ready_at(&self) -> Instant {
        self.ready_at
    }

    /// From the start of compile-or-load to `ready_at`.
    pub fn cold_start(&self) -> Duration {
        self.cold_start
    }

    pub fn cache_hit(&self) -> bool {
        self.cache_hit
    }

    pub fn state(&self) -> InstanceState {
        self.shared.state()
    }

    pub fn interrupt_handle(&self) -> InterruptHandle {
        InterruptHandle {
            shared: self.shared.clone(),
            engine: self.store.engine().clone(),
        }
    }

    /// Timing of the last `invoke`, whatever its outcome.
    pub fn timing(&self) -> Option<TimingBreakdown> {
        self.timing
    }

    pub fn stdout(&self) -> Option<Vec<u8>> {
        self.stdout.as_ref().map(|p| p.contents().to_vec())
    }

    /// Calls the guest's `run` export. The execution window covers the guest
    /// call only.
    pub fn invoke(&mut self, input: &[u8]) -> Result<(Vec<u8>, TimingBreakdown), ExecError> {
        let entered = Instant::now();
        if let Err(prev) = self.shared.state.compare_exchange(
            InstanceState::Ready as u8,
            InstanceState::Running as u8,
            Ordering::SeqCst,
            Ordering::SeqCst,
        ) {
            return Err(ExecError::InstanceReused {
                state: InstanceState::from_u8(prev),
            });
        }
        self.shared.arm_deadline(self.epochs.deadline());
        self.store.set_epoch_deadline(1);

        let start = Instant::now();
        let result = self.bindings.call_run(&mut self.store, input);
        let execution = start.elapsed();

        let (state, outcome) = match result {
            Ok(Ok(output)) => (InstanceState::Finished, Ok(output)),
            Ok(Err(msg)) => (InstanceState::Failed, Err(ExecError::GuestError(msg))),
            Err(err) => {
                let trap = err.downcast_ref::<Trap>().copied();
                if trap == Some(Trap::Interrupt) || self.shared.interrupt.load(Ordering::SeqCst) {
                    (InstanceState::Interrupted, Err(ExecError::Interrupted))
                } else {
                    let reason = match trap {
                        Some(t) => t.to_string(),
                        None => format!("{err:#}"),
                    };
                    (InstanceState::Failed, Err(ExecError::GuestTrap { reason }))
                }
            }
        };
        self.shared.state.store(state as u8, Ordering::SeqCst);
        let timing = TimingBreakdown {
            cold_start: self.cold_start,
            execution,
            total: self.cold_start + entered.elapsed(),
            cache_hit: self.cache_hit,
        };
        self.timing = Some(timing);
        outcome.map(|out| (out, timing))
    }
}

impl fmt::Debug for FunctionInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FunctionInstance")
            .field("instance_id", &self.instance_id)
            .field("module_hash", &self.module_hash)
            .field("state", &self.state())
            .field("cold_start", &self.cold_start)
            .field("cache_hit", &self.cache_hit)
            .finish()
    }
}
