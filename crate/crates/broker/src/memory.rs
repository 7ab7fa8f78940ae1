use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use crate::{
    check_batch, unix_millis, AuditEvent, AuditKind, Broker, BrokerConfig, BrokerError, QueuedJob, ScoreClock,
    WorkerLease,
};

#[derive(Debug, Clone, PartialEq, Eq)]
enum JobState {
    Queued,
    Leased(String),
    Resulted,
    Consumed,
    DeadLetter,
}

#[derive(Debug)]
struct Job {
    payload: Vec<u8>,
    score: u64,
    attempts: u32,
    state: JobState,
    channel_deadline: Instant,
}

#[derive(Debug)]
struct Worker {
    last_beat: Instant,
    last_beat_ms: u64,
}

#[derive(Debug, Default)]
struct State {
    next_batch: u64,
    clock: ScoreClock,
    queue: BTreeSet<(u64, String)>,
    jobs: HashMap<String, Job>,
    results: HashMap<String, Vec<u8>>,
    workers: BTreeMap<String, Worker>,
    inflight: HashMap<String, BTreeSet<String>>,
    dead: Vec<String>,
    audit: Vec<AuditEvent>,
}

impl State {
    fn log(&mut self, kind: AuditKind, subject: &str, worker: Option<&str>, attempts: u32) {
        self.audit.push(AuditEvent {
            kind,
            subject: subject.to_string(),
            worker: worker.map(str::to_string),
            attempts,
            at_ms: unix_millis(),
        });
    }
}

/// Single-process broker: one lock over all state, condition variables for
/// blocking pops and result waits.
#[derive(Debug)]
pub struct MemoryBroker {
    config: BrokerConfig,
    state: Mutex<State>,
    job_ready: Condvar,
    result_ready: Condvar,
}

impl MemoryBroker {
    pub fn new(config: BrokerConfig) -> Self {
        MemoryBroker {
            config,
            state: Mutex::new(State::default()),
            job_ready: Condvar::new(),
            result_ready: Condvar::new(),
        }
    }

    pub fn config(&self) -> &BrokerConfig {
        &self.config
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn lease_ttl(&self) -> Duration {
        Duration::from_millis(self.config.lease_ttl_ms)
    }
}

impl Default for MemoryBroker {
    fn default() -> Self {
        Self::new(BrokerConfig::default())
    }
}

impl Broker for MemoryBroker {
    fn enqueue(&self, payloads: &[Vec<u8>]) -> Result<Vec<String>, BrokerError> {
        if payloads.is_empty() {
            return Ok(Vec::new());
        }
        let mut st = self.lock();
        check_batch(payloads, st.queue.len(), &self.config)?;
        st.next_batch += 1;
        let batch = st.next_batch;
        let first = st.clock.next_batch(payloads.len());
        let deadline = Instant::now() + Duration::from_millis(self.config.result_ttl_ms);
        let mut ids = Vec::with_capacity(payloads.len());
        for (i, payload) in payloads.iter().enumerate() {
            let id = format!("{batch}.{i}");
            let score = first + i as u64;
            st.jobs.insert(
                id.clone(),
                Job {
                    payload: payload.clone(),
                    score,
                    attempts: 0,
                    state: JobState::Queued,
                    channel_deadline: deadline,
                },
            );
            st.queue.insert((score, id.clone()));
            st.log(AuditKind::Enqueued, &id, None, 0);
            ids.push(id);
        }
        drop(st);
        self.job_ready.notify_all();
        Ok(ids)
    }

    fn pop_next(&self, worker_id: &str, timeout: Duration) -> Result<Option<QueuedJob>, BrokerError> {
        let deadline = Instant::now() + timeout;
        let mut st = self.lock();
        let live = st.workers.get(worker_id).is_some_and(|w| w.last_beat.elapsed() < self.lease_ttl());
        if !live {
            return Err(BrokerError::LeaseExpired(worker_id.to_string()));
        }
        loop {
            if let Some((score, id)) = st.queue.pop_first() {
                let job = st.jobs.get_mut(&id).expect("queued job has a record");
                job.state = JobState::Leased(worker_id.to_string());
                let out = QueuedJob { job_id: id.clone(), priority_score: score, payload: job.payload.clone(), attempts: job.attempts };
                st.inflight.entry(worker_id.to_string()).or_default().insert(id.clone());
                st.log(AuditKind::Leased, &id, Some(worker_id), out.attempts);
                return Ok(Some(out));
            }
            let now = Instant::now();
            if now >= deadline {
                return Ok(None);
            }
            st = self.job_ready.wait_timeout(st, deadline - now).unwrap_or_else(|e| e.into_inner()).0;
        }
    }

    fn push_result(&self, job_id: &str, result: &[u8]) -> Result<(), BrokerError> {
        let mut st = self.lock();
        let job = st.jobs.get_mut(job_id).ok_or_else(|| BrokerError::UnknownJob(job_id.into()))?;
        if matches!(job.state, JobState::Resulted | JobState::Consumed) {
            return Err(BrokerError::DuplicateResult(job_id.into()));
        }
        if Instant::now() >= job.channel_deadline {
            return Err(BrokerError::ChannelExpired(job_id.into()));
        }
        let previous = std::mem::replace(&mut job.state, JobState::Resulted);
        let (score, attempts) = (job.score, job.attempts);
        match previous {
            JobState::Queued => {
                st.queue.remove(&(score, job_id.to_string()));
            }
            JobState::Leased(worker) => {
                if let Some(set) = st.inflight.get_mut(&worker) {
                    set.remove(job_id);
                }
            }
            JobState::DeadLetter => st.dead.retain(|d| d != job_id),
            JobState::Resulted | JobState::Consumed => unreachable!(),
        }
        st.results.insert(job_id.to_string(), result.to_vec());
        st.log(AuditKind::Resulted, job_id, None, attempts);
        drop(st);
        self.result_ready.notify_all();
        Ok(())
    }

    fn await_result(&self, job_id: &str, timeout: Duration) -> Result<Option<Vec<u8>>, BrokerError> {
        let deadline = Instant::now() + timeout;
        let mut st = self.lock();
        loop {
            let job = st.jobs.get(job_id).ok_or_else(|| BrokerError::UnknownJob(job_id.into()))?;
            if job.state == JobState::Consumed {
                return Err(BrokerError::AlreadyConsumed(job_id.into()));
            }
            if Instant::now() >= job.channel_deadline {
                st.results.remove(job_id);
                return Err(BrokerError::ChannelExpired(job_id.into()));
            }
            if let Some(bytes) = st.results.remove(job_id) {
                let job = st.jobs.get_mut(job_id).expect("checked above");
                job.state = JobState::Consumed;
                let attempts = job.attempts;
                st.log(AuditKind::Consumed, job_id, None, attempts);
                return Ok(Some(bytes));
            }
            let now = Instant::now();
            if now >= deadline {
                return Ok(None);
            }
            st = self.result_ready.wait_timeout(st, deadline - now).unwrap_or_else(|e| e.into_inner()).0;
        }
    }

    fn heartbeat(&self, worker_id: &str) -> Result<(), BrokerError> {
        let mut st = self.lock();
        st.workers.insert(worker_id.to_string(), Worker { last_beat: Instant::now(), last_beat_ms: unix_millis() });
        Ok(())
    }

    fn reap_dead(&self) -> Result<Vec<String>, BrokerError> {
        let ttl = self.lease_ttl();
        let mut st = self.lock();
        let dead: Vec<String> =
            st.workers.iter().filter(|(_, w)| w.last_beat.elapsed() >= ttl).map(|(id, _)| id.clone()).collect();
        let mut requeued = Vec::new();
        for worker in dead {
            st.workers.remove(&worker);
            st.log(AuditKind::WorkerReaped, &worker, None, 0);
            let held = st.inflight.remove(&worker).unwrap_or_default();
            for id in held {
                let job = st.jobs.get_mut(&id).expect("in-flight job has a record");
                if job.state != JobState::Leased(worker.clone()) {
                    continue;
                }
                job.attempts += 1;
                let (attempts, score) = (job.attempts, job.score);
                if attempts > self.config.max_retries {
                    job.state = JobState::DeadLetter;
                    st.dead.push(id.clone());
                    st.log(AuditKind::DeadLettered, &id, Some(&worker), attempts);
                } else {
                    job.state = JobState::Queued;
                    st.queue.insert((score, id.clone()));
                    st.log(AuditKind::Requeued, &id, Some(&worker), attempts);
                    requeued.push(id);
                }
            }
        }
        // Forget finished jobs well after their channel closed.
        let now = Instant::now();
        let grace = Duration::from_millis(self.config.result_ttl_ms);
        st.jobs.retain(|_, j| {
            !(matches!(j.state, JobState::Consumed | JobState::Resulted) && now >= j.channel_deadline + grace)
        });
        drop(st);
        if !requeued.is_empty() {
            self.job_ready.notify_all();
        }
        requeued.sort();
        Ok(requeued)
    }

    fn workers(&self) -> Result<Vec<WorkerLease>, BrokerError> {
        let ttl = self.lease_ttl();
        let st = self.lock();
        Ok(st
            .workers
            .iter()
            .map(|(id, w)| WorkerLease {
                worker_id: id.clone(),
                ttl_ms: self.config.lease_ttl_ms,
                last_beat_ms: w.last_beat_ms,
                live: w.last_beat.elapsed() < ttl,
            })
            .collect())
    }

    fn queue_len(&self) -> Result<usize, BrokerError> {
        Ok(self.lock().queue.len())
    }

    fn dead_letters(&self) -> Result<Vec<String>, BrokerError> {
        Ok(self.lock().dead.clone())
    }

    fn audit_log(&self) -> Result<Vec<AuditEvent>, BrokerError> {
        Ok(self.lock().audit.clone())
    }

    fn ping(&self) -> Result<(), BrokerError> {
        Ok(())
    }
}
