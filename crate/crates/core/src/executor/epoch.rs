use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use wasmtime::Engine;

use super::ExecError;

pub const DEFAULT_TICK: Duration = Duration::from_millis(10);
pub const DEFAULT_DEADLINE_TICKS: u64 = 3000;

/// Epoch-based deadline for one instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EpochConfig {
    tick_interval: Duration,
    deadline_ticks: u64,
}

impl EpochConfig {
    pub fn new(tick_interval: Duration, deadline_ticks: u64) -> Result<Self, ExecError> {
        if tick_interval.is_zero() {
            return Err(ExecError::InvalidConfig("tick_interval must be positive".into()));
        }
        if deadline_ticks == 0 {
            return Err(ExecError::InvalidConfig("deadline_ticks must be at least 1".into()));
        }
        Ok(EpochConfig {
            tick_interval,
            deadline_ticks,
        })
    }

    /// Smallest number of default-sized ticks covering `deadline`.
    pub fn from_deadline(deadline: Duration) -> Result<Self, ExecError> {
        let tick = DEFAULT_TICK.as_nanos();
        let ticks = deadline.as_nanos().div_ceil(tick).max(1);
        EpochConfig::new(DEFAULT_TICK, ticks as u64)
    }

    pub fn tick_interval(&self) -> Duration {
        self.tick_interval
    }

    pub fn deadline_ticks(&self) -> u64 {
        self.deadline_ticks
    }

    pub fn deadline(&self) -> Duration {
        self.tick_interval
            .saturating_mul(u32::try_from(self.deadline_ticks).unwrap_or(u32::MAX))
    }
}

impl Default for EpochConfig {
    fn default() -> Self {
        EpochConfig {
            tick_interval: DEFAULT_TICK,
            deadline_ticks: DEFAULT_DEADLINE_TICKS,
        }
    }
}

/// Background thread advancing the engine epoch once per tick.
pub(crate) struct Ticker {
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl Ticker {
    pub(crate) fn spawn(engine: Engine, tick: Duration) -> std::io::Result<Self> {
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let thread = std::thread::Builder::new()
            .name("limes-epoch".into())
            .spawn(move || {
                while !flag.load(Ordering::Relaxed) {
                    std::thread::sleep(tick);
                    engine.increment_epoch();
                }
            })?;
        Ok(Ticker {
            stop,
            thread: Some(thread),
        })
    }
}

impl Drop for Ticker {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
