//! In-memory table of recent invocations.

use std::collections::{HashMap, VecDeque};
use std::sync::RwLock;

use base64::engine::general_purpose::STANDARD as B64;
use chrono::{DateTime, Utc};
use limes_core::{InterruptHandle, ModuleHash, TimingBreakdown};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InvocationStatus {
    Pending,
    Running,
    Finished,
    Interrupted,
    Failed,
}

impl InvocationStatus {
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            InvocationStatus::Finished | InvocationStatus::Interrupted | InvocationStatus::Failed
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingMs {
    pub cold_start_ms: f64,
    pub execution_ms: f64,
    pub total_ms: f64,
    pub cache_hit: bool,
}

impl From<TimingBreakdown> for TimingMs {
    fn from(t: TimingBreakdown) -> Self {
        let ms = |d: std::time::Duration| d.as_secs_f64() * 1e3;
        TimingMs {
            cold_start_ms: ms(t.cold_start),
            execution_ms: ms(t.execution),
            total_ms: ms(t.total),
            cache_hit: t.cache_hit,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

/// Byte payloads travel as standard base64 strings.
mod b64 {
    use super::B64;
    use base64::Engine as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(bytes) => s.serialize_some(&B64.encode(bytes)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<u8>>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|s| B64.decode(s).map_err(serde::de::Error::custom))
            .transpose()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvocationRecord {
    pub invocation_id: Uuid,
    pub module_id: ModuleHash,
    #[serde(with = "b64")]
    pub input: Option<Vec<u8>>,
    pub deadline_ms: u64,
    pub status: InvocationStatus,
    pub created_at: DateTime<Utc>,
    pub timing: Option<TimingMs>,
    #[serde(with = "b64")]
    pub output: Option<Vec<u8>>,
    pub error: Option<ErrorBody>,
}

impl InvocationRecord {
    pub fn pending(invocation_id: Uuid, module_id: ModuleHash, input: Vec<u8>, deadline_ms: u64) -> Self {
        InvocationRecord {
            invocation_id,
            module_id,
            input: Some(input),
            deadline_ms,
            status: InvocationStatus::Pending,
            created_at: Utc::now(),
            timing: None,
            output: None,
            error: None,
        }
    }


    /// Exactly one of output/error once terminal, neither before; timing
    /// only for Finished and Interrupted.
    pub fn is_consistent(&self) -> bool {
        let shape = match self.status {
            InvocationStatus::Pending | InvocationStatus::Running => {
                self.output.is_none() && self.error.is_none()
            }
            _ => self.output.is_some() != self.error.is_some(),
        };
        let timing = self.timing.is_some()
            == matches!(self.status, InvocationStatus::Finished | InvocationStatus::Interrupted);
        shape && timing
    }
}

struct Entry {
    record: InvocationRecord,
    interrupt: Option<InterruptHandle>,
    stop_requested: bool,
}

/// Ring buffer of the most recent records.
pub struct RecordTable {
    capacity: usize,
    inner: RwLock<Inner>,
}

struct Inner {
    entries: HashMap<Uuid, Entry>,
    order: VecDeque<Uuid>,
}

/// Outcome of [`RecordTable::request_stop`].
#[derive(Debug)]
pub enum StopOutcome {
    Unknown,
    /// Signal this handle; the record turns Interrupted once the guest unwinds.
    Signal(InvocationRecord, InterruptHandle),
    /// Not running yet; it will be interrupted before entering the guest.
    Deferred(InvocationRecord),
    AlreadyTerminal(InvocationRecord),
}

impl RecordTable {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        RecordTable {
            capacity,
            inner: RwLock::new(Inner {
                entries: HashMap::new(),
                order: VecDeque::new(),
            }),
        }
    }

    /// False if the id is already taken.
    pub fn insert(&self, record: InvocationRecord) -> bool {
        let mut inner = self.inner.write().unwrap();
        let id = record.invocation_id;
        if inner.entries.contains_key(&id) {
            return false;
        }
        while inner.order.len() >= self.capacity {
            if let Some(old) = inner.order.pop_front() {
                inner.entries.remove(&old);
            }
        }
        inner.order.push_back(id);
        inner.entries.insert(
            id,
            Entry {
                record,
                interrupt: None,
                stop_requested: false,
            },
        );
        true
    }

    pub fn get(&self, id: &Uuid) -> Option<InvocationRecord> {
        self.inner.read().unwrap().entries.get(id).map(|e| e.record.clone())
    }

    pub fn len(&self) -> usize {
        self.inner.read().unwrap().order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Marks the record Running. Returns false when a stop arrived first.
    pub fn mark_running(&self, id: &Uuid, handle: InterruptHandle) -> bool {
        let mut inner = self.inner.write().unwrap();
        let Some(entry) = inner.entries.get_mut(id) else {
            return true;
        };
        if entry.stop_requested {
            return false;
        }
        entry.record.status = InvocationStatus::Running;
        entry.interrupt = Some(handle);
        true
    }

    pub fn finish(
        &self,
        id: &Uuid,
        status: InvocationStatus,
        timing: Option<TimingMs>,
        result: Result<Vec<u8>, ErrorBody>,
    ) -> Option<InvocationRecord> {
        debug_assert!(status.is_terminal());
        let mut inner = self.inner.write().unwrap();
        let entry = inner.entries.get_mut(id)?;
        entry.interrupt = None;
        let r = &mut entry.record;
        r.status = status;
        r.timing = timing;
        match result {
            Ok(out) => r.output = Some(out),
            Err(e) => r.error = Some(e),
        }
        Some(r.clone())
    }

    pub fn request_stop(&self, id: &Uuid) -> StopOutcome {
        let mut inner = self.inner.write().unwrap();
        let Some(entry) = inner.entries.get_mut(id) else {
            return StopOutcome::Unknown;
        };
        match entry.record.status {
            s if s.is_terminal() => StopOutcome::AlreadyTerminal(entry.record.clone()),
            InvocationStatus::Running => match &entry.interrupt {
                Some(h) => StopOutcome::Signal(entry.record.clone(), h.clone()),
                None => {
                    entry.stop_requested = true;
                    StopOutcome::Deferred(entry.record.clone())
                }
            },
            _ => {
                entry.stop_requested = true;
                StopOutcome::Deferred(entry.record.clone())
            }
        }
    }
}
