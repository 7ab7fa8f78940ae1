//! Job queue and result delivery for distributed judging.
//!
//! Jobs wait in a queue ordered by enqueue time. Workers pop them
//! atomically while holding a heartbeat lease, and push each result into a
//! per-job channel that a single consumer drains exactly once. A reaper
//! returns the jobs of workers whose lease lapsed to the queue, and moves a
//! job to the dead-letter list once it has been requeued more than
//! `max_retries` times.
//!
//! Two implementations share the [`Broker`] trait: [`MemoryBroker`] for a
//! single process and [`RespBroker`] for a RESP key-value store shared by
//! many processes. [`StoreServer`] is a small embedded store that speaks the
//! subset of RESP the client uses.

mod memory;
mod resp;
mod store;

use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use memory::MemoryBroker;
pub use resp::{RespBroker, RespConnection, RespValue};
pub use store::StoreServer;

pub const DEFAULT_MAX_RETRIES: u32 = 2;
pub const DEFAULT_RESULT_TTL: Duration = Duration::from_secs(3600);
pub const DEFAULT_LEASE_TTL: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BrokerConfig {
    /// Largest accepted payload.
    pub max_payload_bytes: usize,
    /// Queue bound; enqueue fails once the queue would exceed it.
    pub max_queue_len: usize,
    /// Requeues allowed before a job is dead-lettered.
    pub max_retries: u32,
    /// Lifetime of a job's result channel, counted from enqueue.
    pub result_ttl_ms: u64,
    /// A worker is live while its last heartbeat is younger than this.
    pub lease_ttl_ms: u64,
}

impl Default for BrokerConfig {
    fn default() -> Self {
        BrokerConfig {
            max_payload_bytes: 16 << 20,
            max_queue_len: 1_000_000,
            max_retries: DEFAULT_MAX_RETRIES,
            result_ttl_ms: DEFAULT_RESULT_TTL.as_millis() as u64,
            lease_ttl_ms: DEFAULT_LEASE_TTL.as_millis() as u64,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BrokerError {
    #[error("payload {index} is {size} bytes, over the {cap}-byte cap")]
    PayloadTooLarge { index: usize, size: usize, cap: usize },
    #[error("queue full: {queued} queued + {incoming} incoming exceeds {cap}")]
    QueueFull { queued: usize, incoming: usize, cap: usize },
    #[error("broker unreachable: {0}")]
    Unreachable(String),
    #[error("worker `{0}` has no live lease")]
    LeaseExpired(String),
    #[error("unknown job `{0}`")]
    UnknownJob(String),
    #[error("job `{0}` already has a result")]
    DuplicateResult(String),
    #[error("result channel of job `{0}` has expired")]
    ChannelExpired(String),
    #[error("result of job `{0}` was already consumed")]
    AlreadyConsumed(String),
    #[error("store protocol error: {0}")]
    Protocol(String),
}

/// A job handed to a worker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueuedJob {
    /// `<batch>.<index>`, unique per broker.
    pub job_id: String,
    /// Enqueue time in microseconds since the Unix epoch, made strictly
    /// increasing per enqueuing node.
    pub priority_score: u64,
    pub payload: Vec<u8>,
    /// Times the job has been requeued after a worker died.
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerLease {
    pub worker_id: String,
    pub ttl_ms: u64,
    /// Unix milliseconds of the last heartbeat.
    pub last_beat_ms: u64,
    pub live: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditKind {
    Enqueued,
    Leased,
    Resulted,
    Consumed,
    Requeued,
    DeadLettered,
    WorkerReaped,
}

/// One line of the broker's append-only audit trail.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub kind: AuditKind,
    /// Job id, or worker id for `WorkerReaped`.
    pub subject: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worker: Option<String>,
    #[serde(default)]
    pub attempts: u32,
    pub at_ms: u64,
}

/// Queue, result channels and worker leases. All methods are safe to call
/// from many threads; blocking calls wait at most `timeout`.
pub trait Broker: Send + Sync {
    /// Insert a batch atomically. Ids are returned in payload order and pop
    /// in that order.
    fn enqueue(&self, payloads: &[Vec<u8>]) -> Result<Vec<String>, BrokerError>;

    /// Remove and return the oldest job, leasing it to `worker_id`. The
    /// worker must hold a live lease.
    fn pop_next(&self, worker_id: &str, timeout: Duration) -> Result<Option<QueuedJob>, BrokerError>;

    /// Deliver the result of `job_id`. Only the first push is accepted.
    fn push_result(&self, job_id: &str, result: &[u8]) -> Result<(), BrokerError>;

    /// Take the result of `job_id`, waiting up to `timeout`. A result is
    /// handed out once; later calls fail with `AlreadyConsumed`.
    fn await_result(&self, job_id: &str, timeout: Duration) -> Result<Option<Vec<u8>>, BrokerError>;

    /// Register or refresh a worker lease.
    fn heartbeat(&self, worker_id: &str) -> Result<(), BrokerError>;

    /// De-register workers whose lease lapsed and requeue their in-flight
    /// jobs. Returns the requeued job ids (dead-lettered ones excluded).
    fn reap_dead(&self) -> Result<Vec<String>, BrokerError>;

    /// Registered workers, live or awaiting the reaper, sorted by id.
    fn workers(&self) -> Result<Vec<WorkerLease>, BrokerError>;

    fn queue_len(&self) -> Result<usize, BrokerError>;

    fn dead_letters(&self) -> Result<Vec<String>, BrokerError>;

    fn audit_log(&self) -> Result<Vec<AuditEvent>, BrokerError>;

    /// Cheap liveness probe.
    fn ping(&self) -> Result<(), BrokerError>;
}

impl<B: Broker + ?Sized> Broker for std::sync::Arc<B> {
    fn enqueue(&self, payloads: &[Vec<u8>]) -> Result<Vec<String>, BrokerError> {
        (**self).enqueue(payloads)
    }
    fn pop_next(&self, worker_id: &str, timeout: Duration) -> Result<Option<QueuedJob>, BrokerError> {
        (**self).pop_next(worker_id, timeout)
    }
    fn push_result(&self, job_id: &str, result: &[u8]) -> Result<(), BrokerError> {
        (**self).push_result(job_id, result)
    }
    fn await_result(&self, job_id: &str, timeout: Duration) -> Result<Option<Vec<u8>>, BrokerError> {
        (**self).await_result(job_id, timeout)
    }
    fn heartbeat(&self, worker_id: &str) -> Result<(), BrokerError> {
        (**self).heartbeat(worker_id)
    }
    fn reap_dead(&self) -> Result<Vec<String>, BrokerError> {
        (**self).reap_dead()
    }
    fn workers(&self) -> Result<Vec<WorkerLease>, BrokerError> {
        (**self).workers()
    }
    fn queue_len(&self) -> Result<usize, BrokerError> {
        (**self).queue_len()
    }
    fn dead_letters(&self) -> Result<Vec<String>, BrokerError> {
        (**self).dead_letters()
    }
    fn audit_log(&self) -> Result<Vec<AuditEvent>, BrokerError> {
        (**self).audit_log()
    }
    fn ping(&self) -> Result<(), BrokerError> {
        (**self).ping()
    }
}

/// Connect by address: `mem` (a fresh in-process broker) or
/// `redis://host:port`.
pub fn connect(address: &str, config: BrokerConfig) -> Result<Box<dyn Broker>, BrokerError> {
    if address == "mem" || address == "memory" {
        return Ok(Box::new(MemoryBroker::new(config)));
    }
    let rest = address
        .strip_prefix("redis://")
        .or_else(|| address.strip_prefix("resp://"))
        .ok_or_else(|| BrokerError::Unreachable(format!("unsupported broker address `{address}`")))?;
    let broker = RespBroker::new(rest.trim_end_matches('/'), config);
    broker.ping()?;
    Ok(Box::new(broker))
}

pub(crate) fn unix_micros() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_micros() as u64)
}

pub(crate) fn unix_millis() -> u64 {
    unix_micros() / 1000
}

/// Strictly increasing microsecond scores: `max(now, last + 1)` per node.
#[derive(Debug, Default)]
pub(crate) struct ScoreClock {
    last: u64,
}

impl ScoreClock {
    pub(crate) fn next_batch(&mut self, count: usize) -> u64 {
        let first = unix_micros().max(self.last + 1);
        self.last = first + count.saturating_sub(1) as u64;
        first
    }
}

pub(crate) fn check_batch(payloads: &[Vec<u8>], queued: usize, config: &BrokerConfig) -> Result<(), BrokerError> {
    if let Some((index, p)) = payloads.iter().enumerate().find(|(_, p)| p.len() > config.max_payload_bytes) {
        return Err(BrokerError::PayloadTooLarge { index, size: p.len(), cap: config.max_payload_bytes });
    }
    if queued + payloads.len() > config.max_queue_len {
        return Err(BrokerError::QueueFull { queued, incoming: payloads.len(), cap: config.max_queue_len });
    }
    Ok(())
}

/// Batch part of a job id (`"17"` for `"17.3"`).
pub fn batch_of(job_id: &str) -> Option<&str> {
    job_id.split_once('.').map(|(b, _)| b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_clock_is_strictly_increasing() {
        let mut clock = ScoreClock::default();
        let a = clock.next_batch(1000);
        let b = clock.next_batch(1);
        assert!(b >= a + 1000);
        assert!(clock.next_batch(0) > b);
    }

    #[test]
    fn batch_check() {
        let c = BrokerConfig { max_payload_bytes: 4, max_queue_len: 3, ..Default::default() };
        assert!(check_batch(&[vec![0; 4]], 2, &c).is_ok());
        assert_eq!(
            check_batch(&[vec![], vec![0; 5]], 0, &c),
            Err(BrokerError::PayloadTooLarge { index: 1, size: 5, cap: 4 })
        );
        assert!(matches!(check_batch(&[vec![], vec![]], 2, &c), Err(BrokerError::QueueFull { .. })));
        assert_eq!(batch_of("12.7"), Some("12"));
    }

    #[test]
    fn connect_rejects_unknown_scheme() {
        assert!(matches!(connect("http://x", BrokerConfig::default()), Err(BrokerError::Unreachable(_))));
        assert!(connect("mem", BrokerConfig::default()).is_ok());
    }
}
