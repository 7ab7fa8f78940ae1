//! Sandbox worker loop: heartbeat, pop, judge, push.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::thread;
use std::time::{Duration, Instant};

use codeverif_broker::{Broker, BrokerError, QueuedJob};
use codeverif_core::sandbox::Sandbox;

use crate::judge::judge;
use crate::schema::{WorkItem, WorkResult};

#[derive(Debug, Clone)]
pub struct WorkerOptions {
    pub worker_id: String,
    /// How long one pop blocks before the loop rechecks `stop`.
    pub poll: Duration,
    /// Heartbeat period; keep it well under the broker's lease TTL.
    pub heartbeat_every: Duration,
    /// Reap dead peers this often. `None` leaves reaping to the gateway.
    pub sweep_every: Option<Duration>,
}

impl WorkerOptions {
    pub fn new(worker_id: impl Into<String>, lease_ttl: Duration) -> Self {
        WorkerOptions {
            worker_id: worker_id.into(),
            poll: Duration::from_millis(200),
            heartbeat_every: (lease_ttl / 4).max(Duration::from_millis(10)),
            sweep_every: Some(lease_ttl),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WorkerStats {
    pub jobs: u64,
    pub failures: u64,
}

/// Execute one job and build the result to push.
pub fn execute<S: Sandbox + ?Sized>(sandbox: &S, worker_id: &str, job: &QueuedJob, seq: u64) -> WorkResult {
    let worker_id = worker_id.to_string();
    let item: WorkItem = match serde_json::from_slice(&job.payload) {
        Ok(item) => item,
        Err(e) => return WorkResult::Failed { worker_id, message: format!("malformed job payload: {e}") },
    };
    match item {
        WorkItem::Probe { echo, hold_ms } => {
            thread::sleep(Duration::from_millis(hold_ms));
            WorkResult::Probe { worker_id, echo, seq }
        }
        WorkItem::Judge { request, first_case } => match judge(sandbox, &request, first_case) {
            Ok(results) => WorkResult::Judged { worker_id, results },
            Err(e) => WorkResult::Failed { worker_id, message: e.to_string() },
        },
    }
}

/// Serve jobs until `stop` is set. Broker outages are retried; the loop only
/// returns when stopped.
pub fn run_worker<B: Broker + ?Sized, S: Sandbox + ?Sized>(
    broker: &B,
    sandbox: &S,
    options: &WorkerOptions,
    stop: &AtomicBool,
) -> WorkerStats {
    let id = options.worker_id.as_str();
    let seq = AtomicU64::new(0);
    let mut stats = WorkerStats::default();
    let done = AtomicBool::new(false);
    thread::scope(|scope| {
        // Beat from a separate thread so a long judge keeps the lease.
        scope.spawn(|| {
            while !stop.load(Ordering::SeqCst) && !done.load(Ordering::SeqCst) {
                if let Err(e) = broker.heartbeat(id) {
                    tracing::warn!(worker = id, error = %e, "heartbeat failed");
                }
                sleep_until(options.heartbeat_every, || stop.load(Ordering::SeqCst) || done.load(Ordering::SeqCst));
            }
        });
        let mut last_sweep = Instant::now();
        let mut backoff = Duration::from_millis(50);
        while !stop.load(Ordering::SeqCst) {
            if let Some(every) = options.sweep_every {
                if last_sweep.elapsed() >= every {
                    last_sweep = Instant::now();
                    match broker.reap_dead() {
                        Ok(ids) if !ids.is_empty() => tracing::info!(worker = id, requeued = ?ids, "reaped dead workers"),
                        Ok(_) => {}
                        Err(e) => tracing::warn!(worker = id, error = %e, "sweep failed"),
                    }
                }
            }
            let job = match broker.pop_next(id, options.poll) {
                Ok(Some(job)) => job,
                Ok(None) => continue,
                Err(BrokerError::LeaseExpired(_)) => {
                    // Reaped or not yet registered: re-register and retry.
                    let _ = broker.heartbeat(id);
                    continue;
                }
                Err(e) => {
                    tracing::warn!(worker = id, error = %e, "pop failed");
                    thread::sleep(backoff);
                    backoff = (backoff * 2).min(Duration::from_secs(2));
                    continue;
                }
            };
            backoff = Duration::from_millis(50);
            let result = execute(sandbox, id, &job, seq.fetch_add(1, Ordering::SeqCst));
            if matches!(result, WorkResult::Failed { .. }) {
                stats.failures += 1;
            }
            let bytes = serde_json::to_vec(&result).expect("results serialize");
            match broker.push_result(&job.job_id, &bytes) {
                Ok(()) => stats.jobs += 1,
                Err(e) => tracing::warn!(worker = id, job = %job.job_id, error = %e, "push failed"),
            }
        }
        done.store(true, Ordering::SeqCst);
    });
    stats
}

fn sleep_until(total: Duration, cancelled: impl Fn() -> bool) {
    let end = Instant::now() + total;
    while !cancelled() {
        let now = Instant::now();
        if now >= end {
            return;
        }
        thread::sleep((end - now).min(Duration::from_millis(20)));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use codeverif_broker::{BrokerConfig, MemoryBroker};
    use codeverif_core::sandbox::ProcessSandbox;
    use std::sync::Arc;

    #[test]
    fn probes_round_trip_through_workers() {
        let broker = Arc::new(MemoryBroker::new(BrokerConfig { lease_ttl_ms: 400, ..Default::default() }));
        let stop = Arc::new(AtomicBool::new(false));
        let handles: Vec<_> = (0..3)
            .map(|i| {
                let (broker, stop) = (broker.clone(), stop.clone());
                thread::spawn(move || {
                    let opts = WorkerOptions::new(format!("w{i}"), Duration::from_millis(400));
                    run_worker(&*broker, &ProcessSandbox::default(), &opts, &stop)
                })
            })
            .collect();
        let payloads: Vec<Vec<u8>> = (0..30)
            .map(|i| serde_json::to_vec(&WorkItem::Probe { echo: i.to_string(), hold_ms: 1 }).unwrap())
            .collect();
        let ids = broker.enqueue(&payloads).unwrap();
        for (i, id) in ids.iter().enumerate() {
            let bytes = broker.await_result(id, Duration::from_secs(10)).unwrap().unwrap();
            match serde_json::from_slice::<WorkResult>(&bytes).unwrap() {
                WorkResult::Probe { echo, .. } => assert_eq!(echo, i.to_string()),
                other => panic!("{other:?}"),
            }
        }
        stop.store(true, Ordering::SeqCst);
        let total: u64 = handles.into_iter().map(|h| h.join().unwrap().jobs).sum();
        assert_eq!(total, 30);
    }

    #[test]
    fn malformed_payload_is_reported() {
        let job = QueuedJob { job_id: "1.0".into(), priority_score: 0, payload: b"{".to_vec(), attempts: 0 };
        assert!(matches!(execute(&ProcessSandbox::default(), "w", &job, 0), WorkResult::Failed { .. }));
    }
}
