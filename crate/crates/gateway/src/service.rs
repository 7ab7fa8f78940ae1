//! Submission, result assembly and health, independent of the transport.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use codeverif_broker::{Broker, BrokerError, WorkerLease};
use codeverif_core::sandbox::ResourceLimits;
use codeverif_core::TaskSpec;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::judge::assemble;
use crate::schema::{CaseResults, Granularity, JudgeRequest, JudgeResponse, ResolvedRequest, WorkItem, WorkResult};

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub default_limits: ResourceLimits,
    pub granularity: Granularity,
    /// Directory holding `<task_ref>.json` files (a task, or any object
    /// with a `task` field such as a verified bundle).
    pub task_dir: Option<PathBuf>,
    /// Append-only JSONL record of submissions and served results.
    pub audit_path: Option<PathBuf>,
    /// Cap on a single fetch's blocking wait.
    pub max_fetch_timeout: Duration,
    /// Blocking fetches allowed at once.
    pub max_waiters: usize,
    pub sweep_interval: Duration,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            default_limits: ResourceLimits::default(),
            granularity: Granularity::Request,
            task_dir: None,
            audit_path: None,
            max_fetch_timeout: Duration::from_secs(60),
            max_waiters: 256,
            sweep_interval: Duration::from_secs(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemError {
    pub index: usize,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("{} invalid request(s)", .0.len())]
    Invalid(Vec<ItemError>),
    #[error("broker unavailable: {0}")]
    BrokerDown(String),
    #[error("{0}")]
    QueueFull(String),
    #[error("malformed job id `{0}`")]
    BadJobId(String),
    #[error("unknown job `{0}`")]
    UnknownJob(String),
    #[error("result of job `{0}` was already consumed")]
    AlreadyConsumed(String),
    #[error("result channel of job `{0}` has expired")]
    ChannelExpired(String),
    #[error("job `{0}` was dead-lettered after repeated worker failures")]
    DeadLettered(String),
    #[error("judging job `{job}` failed: {message}")]
    JudgeFailed { job: String, message: String },
    #[error("internal error: {0}")]
    Internal(String),
}

impl GatewayError {
    /// Short machine-readable code used in HTTP error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            GatewayError::Invalid(_) => "invalid_request",
            GatewayError::BrokerDown(_) => "broker_unavailable",
            GatewayError::QueueFull(_) => "queue_full",
            GatewayError::BadJobId(_) => "bad_job_id",
            GatewayError::UnknownJob(_) => "unknown_job",
            GatewayError::AlreadyConsumed(_) => "already_consumed",
            GatewayError::ChannelExpired(_) => "channel_expired",
            GatewayError::DeadLettered(_) => "dead_lettered",
            GatewayError::JudgeFailed { .. } => "judge_failed",
            GatewayError::Internal(_) => "internal",
        }
    }
}

fn broker_error(job: &str, e: BrokerError) -> GatewayError {
    match e {
        BrokerError::Unreachable(m) | BrokerError::Protocol(m) => GatewayError::BrokerDown(m),
        e @ (BrokerError::QueueFull { .. } | BrokerError::PayloadTooLarge { .. }) => GatewayError::QueueFull(e.to_string()),
        BrokerError::UnknownJob(_) => GatewayError::UnknownJob(job.into()),
        BrokerError::AlreadyConsumed(_) => GatewayError::AlreadyConsumed(job.into()),
        BrokerError::ChannelExpired(_) => GatewayError::ChannelExpired(job.into()),
        other => GatewayError::Internal(other.to_string()),
    }
}

/// One line of the gateway audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum AuditRecord {
    Submitted { job_id: String, cases: usize },
    Result { response: JudgeResponse },
    Failed { job_id: String, message: String },
}

#[derive(Debug)]
struct AuditLog {
    file: Mutex<File>,
}

impl AuditLog {
    fn open(path: &Path) -> io::Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(AuditLog { file: Mutex::new(file) })
    }

    fn append(&self, records: &[AuditRecord]) -> io::Result<()> {
        let mut text = String::new();
        for r in records {
            text.push_str(&serde_json::to_string(r).expect("audit records serialize"));
            text.push('\n');
        }
        let mut file = self.file.lock().unwrap_or_else(|e| e.into_inner());
        file.write_all(text.as_bytes())?;
        file.flush()
    }
}

/// Read a gateway audit log.
pub fn read_audit_log(path: &Path) -> io::Result<Vec<AuditRecord>> {
    BufReader::new(File::open(path)?)
        .lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|l| serde_json::from_str(&l?).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e)))
        .collect()
}

/// A handle is a broker job id (`7.3`), or `7.3+5` for five per-case jobs
/// `7.3` through `7.7`.
fn expand_handle(handle: &str) -> Result<Vec<String>, GatewayError> {
    let bad = || GatewayError::BadJobId(handle.to_string());
    let (first, count) = match handle.split_once('+') {
        Some((first, count)) => (first, count.parse::<usize>().map_err(|_| bad())?),
        None => (handle, 1),
    };
    let (batch, index) = first.split_once('.').ok_or_else(bad)?;
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    if !digits(batch) || !digits(index) || count == 0 {
        return Err(bad());
    }
    let index: usize = index.parse().map_err(|_| bad())?;
    Ok((index..index + count).map(|i| format!("{batch}.{i}")).collect())
}

#[derive(Debug, Default)]
struct Partial {
    parts: Vec<Option<CaseResults>>,
    served: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkersReply {
    pub workers: Vec<WorkerLease>,
    pub queue_len: usize,
    pub dead_letters: usize,
}

/// The gateway service. Cheap to share behind an `Arc`.
pub struct Gateway {
    broker: Arc<dyn Broker>,
    config: GatewayConfig,
    audit: Option<AuditLog>,
    /// Per-case results already taken from the broker for handles whose
    /// other cases are still pending.
    partial: Mutex<HashMap<String, Arc<Mutex<Partial>>>>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway").field("config", &self.config).finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(broker: Arc<dyn Broker>, config: GatewayConfig) -> io::Result<Self> {
        let audit = config.audit_path.as_deref().map(AuditLog::open).transpose()?;
        Ok(Gateway { broker, config, audit, partial: Mutex::new(HashMap::new()) })
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn broker(&self) -> &Arc<dyn Broker> {
        &self.broker
    }

    fn audit(&self, records: &[AuditRecord]) -> Result<(), GatewayError> {
        match &self.audit {
            Some(log) => log.append(records).map_err(|e| GatewayError::Internal(format!("audit log: {e}"))),
            None => Ok(()),
        }
    }

    fn load_task(&self, name: &str) -> Result<TaskSpec, String> {
        let dir = self.config.task_dir.as_ref().ok_or("task_ref given but the gateway has no task directory")?;
        if name.is_empty() || !name.bytes().all(|b| b.is_ascii_alphanumeric() || b"-_.".contains(&b)) || name.contains("..") {
            return Err(format!("invalid task_ref `{name}`"));
        }
        let path = dir.join(format!("{name}.json"));
        let text = std::fs::read_to_string(&path).map_err(|e| format!("task `{name}`: {e}"))?;
        let mut value: Value = serde_json::from_str(&text).map_err(|e| format!("task `{name}`: {e}"))?;
        if let Some(inner) = value.get_mut("task") {
            value = inner.take();
        }
        serde_json::from_value(value).map_err(|e| format!("task `{name}`: {e}"))
    }

    fn validate(&self, request: JudgeRequest) -> Result<(ResolvedRequest, Granularity), String> {
        if request.suite.is_empty() {
            return Err("suite is empty".into());
        }
        if let Some(i) = request.suite.iter().position(|c| c.weight == 0) {
            return Err(format!("case {i} has weight 0"));
        }
        if let Some(limits) = &request.limits {
            limits.validate().map_err(|e| e.to_string())?;
        }
        let task = match (&request.task_ref, &request.task) {
            (Some(_), Some(_)) => return Err("give either task_ref or task, not both".into()),
            (Some(name), None) => Some(self.load_task(name)?),
            (None, task) => task.clone(),
        };
        let granularity = request.granularity.unwrap_or(self.config.granularity);
        Ok((ResolvedRequest::new(request, task, self.config.default_limits), granularity))
    }

    /// Validate and enqueue a batch. Returns one handle per request, in
    /// order. Nothing is enqueued unless every request is valid.
    pub fn submit(&self, requests: Vec<JudgeRequest>) -> Result<Vec<String>, GatewayError> {
        if requests.is_empty() {
            return Ok(Vec::new());
        }
        let mut errors = Vec::new();
        let mut resolved = Vec::new();
        for (index, request) in requests.into_iter().enumerate() {
            match self.validate(request) {
                Ok(r) => resolved.push(r),
                Err(message) => errors.push(ItemError { index, message }),
            }
        }
        if !errors.is_empty() {
            return Err(GatewayError::Invalid(errors));
        }

        let mut payloads = Vec::new();
        let mut spans = Vec::with_capacity(resolved.len());
        for (request, granularity) in resolved {
            let start = payloads.len();
            let cases = request.suite.len();
            let items: Vec<WorkItem> = match granularity {
                Granularity::Request => vec![WorkItem::Judge { request: Box::new(request), first_case: 0 }],
                Granularity::Case => (0..cases)
                    .map(|i| WorkItem::Judge {
                        request: Box::new(ResolvedRequest { suite: vec![request.suite[i].clone()], ..request.clone() }),
                        first_case: i,
                    })
                    .collect(),
            };
            spans.push((start, items.len(), cases, granularity));
            payloads.extend(items.iter().map(|item| serde_json::to_vec(item).expect("work items serialize")));
        }
        let ids = self.broker.enqueue(&payloads).map_err(|e| broker_error("", e))?;
        let handles: Vec<String> = spans
            .iter()
            .map(|&(start, count, _, granularity)| match granularity {
                Granularity::Request => ids[start].clone(),
                Granularity::Case => format!("{}+{count}", ids[start]),
            })
            .collect();
        let records: Vec<AuditRecord> = handles
            .iter()
            .zip(&spans)
            .map(|(h, &(_, _, cases, _))| AuditRecord::Submitted { job_id: h.clone(), cases })
            .collect();
        self.audit(&records)?;
        Ok(handles)
    }

    fn decode(&self, handle: &str, id: &str, bytes: &[u8]) -> Result<CaseResults, GatewayError> {
        let result: WorkResult = serde_json::from_slice(bytes)
            .map_err(|e| GatewayError::Internal(format!("malformed result for `{id}`: {e}")))?;
        match result {
            WorkResult::Judged { results, .. } => Ok(results),
            WorkResult::Failed { message, .. } => {
                self.audit(&[AuditRecord::Failed { job_id: handle.into(), message: message.clone() }])?;
                Err(GatewayError::JudgeFailed { job: handle.into(), message })
            }
            WorkResult::Probe { .. } => Err(GatewayError::Internal(format!("job `{id}` is not a judge job"))),
        }
    }

    fn await_part(&self, handle: &str, id: &str, timeout: Duration) -> Result<Option<Vec<u8>>, GatewayError> {
        match self.broker.await_result(id, timeout).map_err(|e| broker_error(handle, e))? {
            Some(bytes) => Ok(Some(bytes)),
            None => {
                let dead = self.broker.dead_letters().map_err(|e| broker_error(handle, e))?;
                if dead.iter().any(|d| d == id) {
                    Err(GatewayError::DeadLettered(handle.into()))
                } else {
                    Ok(None)
                }
            }
        }
    }

    /// Wait up to `timeout` for the response of `handle`. `Ok(None)` means
    /// still pending. A response is served once.
    pub fn fetch(&self, handle: &str, timeout: Duration) -> Result<Option<JudgeResponse>, GatewayError> {
        let ids = expand_handle(handle)?;
        let timeout = timeout.min(self.config.max_fetch_timeout);
        let response = if ids.len() == 1 {
            match self.await_part(handle, &ids[0], timeout)? {
                Some(bytes) => {
                    let part = self.decode(handle, &ids[0], &bytes)?;
                    assemble(handle, vec![part]).map_err(GatewayError::Internal)?
                }
                None => return Ok(None),
            }
        } else {
            match self.fetch_fanned_out(handle, &ids, timeout)? {
                Some(r) => r,
                None => return Ok(None),
            }
        };
        self.audit(&[AuditRecord::Result { response: response.clone() }])?;
        Ok(Some(response))
    }

    fn fetch_fanned_out(
        &self,
        handle: &str,
        ids: &[String],
        timeout: Duration,
    ) -> Result<Option<JudgeResponse>, GatewayError> {
        let deadline = Instant::now() + timeout;
        let slot = {
            let mut map = self.partial.lock().unwrap_or_else(|e| e.into_inner());
            map.entry(handle.to_string())
                .or_insert_with(|| Arc::new(Mutex::new(Partial { parts: vec![None; ids.len()], served: false })))
                .clone()
        };
        let mut partial = slot.lock().unwrap_or_else(|e| e.into_inner());
        if partial.served {
            return Err(GatewayError::AlreadyConsumed(handle.into()));
        }
        let forget = || {
            self.partial.lock().unwrap_or_else(|e| e.into_inner()).remove(handle);
        };
        for (i, id) in ids.iter().enumerate() {
            if partial.parts[i].is_some() {
                continue;
            }
            let left = deadline.saturating_duration_since(Instant::now());
            let got = match self.await_part(handle, id, left) {
                Ok(got) => got,
                Err(e @ (GatewayError::BrokerDown(_) | GatewayError::Internal(_))) => return Err(e),
                Err(e) => {
                    // A part that can never arrive fails the whole handle.
                    forget();
                    partial.served = true;
                    return Err(e);
                }
            };
            match got {
                Some(bytes) => match self.decode(handle, id, &bytes) {
                    Ok(part) => partial.parts[i] = Some(part),
                    Err(e) => {
                        forget();
                        partial.served = true;
                        return Err(e);
                    }
                },
                None => return Ok(None),
            }
        }
        let parts: Vec<CaseResults> = partial.parts.iter_mut().map(|p| p.take().expect("all parts present")).collect();
        partial.served = true;
        forget();
        assemble(handle, parts).map(Some).map_err(GatewayError::Internal)
    }

    pub fn workers(&self) -> Result<WorkersReply, GatewayError> {
        let err = |e| broker_error("", e);
        Ok(WorkersReply {
            workers: self.broker.workers().map_err(err)?,
            queue_len: self.broker.queue_len().map_err(err)?,
            dead_letters: self.broker.dead_letters().map_err(err)?.len(),
        })
    }

    pub fn health(&self) -> Result<(), GatewayError> {
        self.broker.ping().map_err(|e| broker_error("", e))
    }

    /// Reap dead workers; returns requeued job ids.
    pub fn sweep(&self) -> Result<Vec<String>, GatewayError> {
        self.broker.reap_dead().map_err(|e| broker_error("", e))
    }
}
