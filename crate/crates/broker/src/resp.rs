//! RESP wire codec, a blocking client connection and the store-backed broker.

use std::io::{self, BufRead, BufReader, Write};
use std::net::TcpStream;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use crate::{
    check_batch, unix_millis, AuditEvent, AuditKind, Broker, BrokerConfig, BrokerError, QueuedJob, ScoreClock,
    WorkerLease,
};

const QUEUE: &str = "queue:tasks";
const WORKERS: &str = "workers";
const DEAD: &str = "deadletter";
const AUDIT: &str = "audit:events";
const BATCH_SEQ: &str = "seq:batch";

/// Longest bulk string or array accepted from the wire.
const MAX_BULK: usize = 512 << 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RespValue {
    Simple(String),
    Error(String),
    Integer(i64),
    Bulk(Option<Vec<u8>>),
    Array(Option<Vec<RespValue>>),
}

impl RespValue {
    pub fn ok() -> Self {
        RespValue::Simple("OK".into())
    }

    pub fn bulk(bytes: impl Into<Vec<u8>>) -> Self {
        RespValue::Bulk(Some(bytes.into()))
    }

    pub fn nil() -> Self {
        RespValue::Bulk(None)
    }

    pub fn is_nil(&self) -> bool {
        matches!(self, RespValue::Bulk(None) | RespValue::Array(None))
    }

    pub fn encode(&self, out: &mut Vec<u8>) {
        match self {
            RespValue::Simple(s) => out.extend_from_slice(format!("+{s}\r\n").as_bytes()),
            RespValue::Error(s) => out.extend_from_slice(format!("-{s}\r\n").as_bytes()),
            RespValue::Integer(i) => out.extend_from_slice(format!(":{i}\r\n").as_bytes()),
            RespValue::Bulk(None) => out.extend_from_slice(b"$-1\r\n"),
            RespValue::Bulk(Some(b)) => {
                out.extend_from_slice(format!("${}\r\n", b.len()).as_bytes());
                out.extend_from_slice(b);
                out.extend_from_slice(b"\r\n");
            }
            RespValue::Array(None) => out.extend_from_slice(b"*-1\r\n"),
            RespValue::Array(Some(items)) => {
                out.extend_from_slice(format!("*{}\r\n", items.len()).as_bytes());
                for item in items {
                    item.encode(out);
                }
            }
        }
    }

    /// Read one value; `Ok(None)` on clean end of stream.
    pub fn decode(reader: &mut impl BufRead) -> io::Result<Option<RespValue>> {
        let mut line = Vec::new();
        if reader.read_until(b'\n', &mut line)? == 0 {
            return Ok(None);
        }
        if !line.ends_with(b"\r\n") {
            return Err(invalid("line not terminated by CRLF"));
        }
        line.truncate(line.len() - 2);
        let (tag, rest) = line.split_first().ok_or_else(|| invalid("empty line"))?;
        let text = || String::from_utf8_lossy(rest).into_owned();
        let number = || -> io::Result<i64> { text().parse().map_err(|_| invalid("bad length or integer")) };
        let value = match tag {
            b'+' => RespValue::Simple(text()),
            b'-' => RespValue::Error(text()),
            b':' => RespValue::Integer(number()?),
            b'$' => {
                let len = number()?;
                if len < 0 {
                    RespValue::Bulk(None)
                } else {
                    let len = usize::try_from(len).map_err(|_| invalid("bad length"))?;
                    if len > MAX_BULK {
                        return Err(invalid("bulk string too long"));
                    }
                    let mut buf = vec![0; len + 2];
                    reader.read_exact(&mut buf)?;
                    if !buf.ends_with(b"\r\n") {
                        return Err(invalid("bulk string not terminated by CRLF"));
                    }
                    buf.truncate(len);
                    RespValue::Bulk(Some(buf))
                }
            }
            b'*' => {
                let len = number()?;
                if len < 0 {
                    RespValue::Array(None)
                } else {
                    let len = usize::try_from(len).map_err(|_| invalid("bad length"))?;
                    if len > MAX_BULK {
                        return Err(invalid("array too long"));
                    }
                    let mut items = Vec::with_capacity(len.min(1024));
                    for _ in 0..len {
                        items.push(Self::decode(reader)?.ok_or_else(|| invalid("truncated array"))?);
                    }
                    RespValue::Array(Some(items))
                }
            }
            _ => {
                // Inline command, as typed into a terminal.
                let words = String::from_utf8_lossy(&line)
                    .split_whitespace()
                    .map(|w| RespValue::bulk(w.as_bytes()))
                    .collect();
                RespValue::Array(Some(words))
            }
        };
        Ok(Some(value))
    }
}

fn invalid(msg: &str) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.to_string())
}

fn encode_command(args: &[Vec<u8>], out: &mut Vec<u8>) {
    RespValue::Array(Some(args.iter().map(|a| RespValue::bulk(a.clone())).collect())).encode(out);
}

/// Builds a command from mixed string and byte arguments.
macro_rules! cmd {
    ($($arg:expr),* $(,)?) => {
        vec![$(AsRef::<[u8]>::as_ref(&$arg).to_vec()),*]
    };
}

/// One blocking client connection.
#[derive(Debug)]
pub struct RespConnection {
    reader: BufReader<TcpStream>,
}

impl RespConnection {
    pub fn connect(address: &str) -> io::Result<Self> {
        let stream = TcpStream::connect(address)?;
        stream.set_nodelay(true)?;
        Ok(RespConnection { reader: BufReader::new(stream) })
    }

    /// Send every command in one write, then read one reply per command.
    pub fn pipeline(&mut self, commands: &[Vec<Vec<u8>>], timeout: Duration) -> io::Result<Vec<RespValue>> {
        let mut out = Vec::new();
        for c in commands {
            encode_command(c, &mut out);
        }
        let stream = self.reader.get_mut();
        stream.set_read_timeout(Some(timeout.max(Duration::from_millis(1))))?;
        stream.write_all(&out)?;
        commands
            .iter()
            .map(|_| RespValue::decode(&mut self.reader)?.ok_or_else(|| io::ErrorKind::UnexpectedEof.into()))
            .collect()
    }

    pub fn command(&mut self, args: Vec<Vec<u8>>, timeout: Duration) -> io::Result<RespValue> {
        Ok(self.pipeline(&[args], timeout)?.remove(0))
    }
}

/// Broker state kept in a RESP store. Keys:
///
/// ```text
/// queue:tasks          sorted set, job id scored by enqueue time (us)
/// job:<id>             payload            score:<id>     priority score
/// attempts:<id>        requeue count      chan:<id>      result channel lifetime marker
/// result:<id>          result list        pushed:<id>    first-push guard
/// consumed:<id>        first-read marker  lease:<id>     worker holding the job
/// worker:<w>           lease key with TTL beat:<w>       last heartbeat (ms)
/// workers              registered worker set
/// inflight:<w>         jobs held by worker w
/// deadletter           dead-lettered job ids
/// audit:events         JSON audit events
/// seq:batch            batch counter
/// ```
///
/// A job popped by a worker that dies before recording it in
/// `inflight:<w>` is lost; the window is one round trip.
#[derive(Debug)]
pub struct RespBroker {
    address: String,
    config: BrokerConfig,
    pool: Mutex<Vec<RespConnection>>,
    clock: Mutex<ScoreClock>,
    round_trips: AtomicU64,
}

/// Slack added to blocking commands' socket timeouts.
const IO_SLACK: Duration = Duration::from_secs(10);

fn bytes_of(v: &RespValue) -> Option<&[u8]> {
    match v {
        RespValue::Bulk(Some(b)) => Some(b),
        RespValue::Simple(s) => Some(s.as_bytes()),
        _ => None,
    }
}

fn int_of(v: &RespValue) -> Result<i64, BrokerError> {
    match v {
        RespValue::Integer(i) => Ok(*i),
        RespValue::Bulk(Some(b)) => std::str::from_utf8(b)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| BrokerError::Protocol("expected an integer".into())),
        RespValue::Error(e) => Err(BrokerError::Protocol(e.clone())),
        other => Err(BrokerError::Protocol(format!("expected an integer, got {other:?}"))),
    }
}

fn string_list(v: &RespValue) -> Result<Vec<String>, BrokerError> {
    match v {
        RespValue::Array(Some(items)) => Ok(items
            .iter()
            .filter_map(bytes_of)
            .map(|b| String::from_utf8_lossy(b).into_owned())
            .collect()),
        RespValue::Array(None) => Ok(Vec::new()),
        RespValue::Error(e) => Err(BrokerError::Protocol(e.clone())),
        other => Err(BrokerError::Protocol(format!("expected an array, got {other:?}"))),
    }
}

fn check(replies: &[RespValue]) -> Result<(), BrokerError> {
    for r in replies {
        if let RespValue::Error(e) = r {
            return Err(BrokerError::Protocol(e.clone()));
        }
    }
    Ok(())
}

fn seconds(timeout: Duration) -> String {
    format!("{:.3}", timeout.as_secs_f64().max(0.001))
}

fn audit_json(kind: AuditKind, subject: &str, worker: Option<&str>, attempts: u32) -> Vec<u8> {
    let event = AuditEvent {
        kind,
        subject: subject.into(),
        worker: worker.map(str::to_string),
        attempts,
        at_ms: unix_millis(),
    };
    serde_json::to_vec(&event).expect("audit events serialize")
}

impl RespBroker {
    /// `address` is `host:port`. Connections are opened lazily.
    pub fn new(address: &str, config: BrokerConfig) -> Self {
        RespBroker {
            address: address.to_string(),
            config,
            pool: Mutex::new(Vec::new()),
            clock: Mutex::new(ScoreClock::default()),
            round_trips: AtomicU64::new(0),
        }
    }

    /// Pipelined round trips made so far.
    pub fn round_trips(&self) -> u64 {
        self.round_trips.load(Ordering::Relaxed)
    }

    fn double_ttl(&self) -> String {
        (self.config.result_ttl_ms.saturating_mul(2)).to_string()
    }

    fn run(&self, commands: &[Vec<Vec<u8>>], block: Duration) -> Result<Vec<RespValue>, BrokerError> {
        let pooled = self.pool.lock().unwrap_or_else(|e| e.into_inner()).pop();
        let mut conn = match pooled {
            Some(c) => c,
            None => RespConnection::connect(&self.address)
                .map_err(|e| BrokerError::Unreachable(format!("{}: {e}", self.address)))?,
        };
        self.round_trips.fetch_add(1, Ordering::Relaxed);
        match conn.pipeline(commands, block + IO_SLACK) {
            Ok(replies) => {
                self.pool.lock().unwrap_or_else(|e| e.into_inner()).push(conn);
                Ok(replies)
            }
            Err(e) => Err(BrokerError::Unreachable(format!("{}: {e}", self.address))),
        }
    }

    fn one(&self, command: Vec<Vec<u8>>, block: Duration) -> Result<RespValue, BrokerError> {
        let reply = self.run(&[command], block)?.remove(0);
        check(std::slice::from_ref(&reply))?;
        Ok(reply)
    }

    /// Record the lease of a popped job and fetch its payload.
    fn lease(&self, worker_id: &str, job_id: &str, score: u64) -> Result<QueuedJob, BrokerError> {
        let replies = self.run(
            &[
                cmd!["SADD", format!("inflight:{worker_id}"), job_id],
                cmd!["SET", format!("lease:{job_id}"), worker_id, "PX", self.double_ttl()],
                cmd!["GET", format!("job:{job_id}")],
                cmd!["GET", format!("attempts:{job_id}")],
            ],
            Duration::ZERO,
        )?;
        check(&replies)?;
        let payload = bytes_of(&replies[2]).ok_or_else(|| BrokerError::UnknownJob(job_id.into()))?.to_vec();
        let attempts = int_of(&replies[3]).unwrap_or(0) as u32;
        self.one(
            cmd!["RPUSH", AUDIT, audit_json(AuditKind::Leased, job_id, Some(worker_id), attempts)],
            Duration::ZERO,
        )?;
        Ok(QueuedJob { job_id: job_id.into(), priority_score: score, payload, attempts })
    }
}

fn parse_popped(reply: &RespValue) -> Result<Option<(String, u64)>, BrokerError> {
    let items = match reply {
        RespValue::Array(Some(items)) if !items.is_empty() => items,
        RespValue::Array(_) | RespValue::Bulk(None) => return Ok(None),
        RespValue::Error(e) => return Err(BrokerError::Protocol(e.clone())),
        other => return Err(BrokerError::Protocol(format!("unexpected pop reply {other:?}"))),
    };
    // BZPOPMIN: [key, member, score]; ZPOPMIN: [member, score].
    let (member, score) = match items.len() {
        3 => (&items[1], &items[2]),
        2 => (&items[0], &items[1]),
        _ => return Err(BrokerError::Protocol("malformed pop reply".into())),
    };
    let member = bytes_of(member).ok_or_else(|| BrokerError::Protocol("pop member".into()))?;
    let score: f64 = bytes_of(score)
        .and_then(|b| std::str::from_utf8(b).ok())
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| BrokerError::Protocol("pop score".into()))?;
    Ok(Some((String::from_utf8_lossy(member).into_owned(), score as u64)))
}

impl Broker for RespBroker {
    fn enqueue(&self, payloads: &[Vec<u8>]) -> Result<Vec<String>, BrokerError> {
        if payloads.is_empty() {
            return Ok(Vec::new());
        }
        let first = self.run(&[cmd!["ZCARD", QUEUE]], Duration::ZERO)?;
        let queued = int_of(&first[0])? as usize;
        check_batch(payloads, queued, &self.config)?;
        let batch = int_of(&self.one(cmd!["INCR", BATCH_SEQ], Duration::ZERO)?)?;
        let start = self.clock.lock().unwrap_or_else(|e| e.into_inner()).next_batch(payloads.len());
        let keep = self.double_ttl();
        let ttl = self.config.result_ttl_ms.to_string();
        let ids: Vec<String> = (0..payloads.len()).map(|i| format!("{batch}.{i}")).collect();

        let mut commands = vec![cmd!["MULTI"]];
        let mut zadd = cmd!["ZADD", QUEUE];
        let mut audit = cmd!["RPUSH", AUDIT];
        for (i, (id, payload)) in ids.iter().zip(payloads).enumerate() {
            let score = (start + i as u64).to_string();
            commands.push(cmd!["SET", format!("job:{id}"), payload, "PX", keep]);
            commands.push(cmd!["SET", format!("score:{id}"), score, "PX", keep]);
            commands.push(cmd!["SET", format!("attempts:{id}"), "0", "PX", keep]);
            commands.push(cmd!["SET", format!("chan:{id}"), "1", "PX", ttl]);
            zadd.push(score.into_bytes());
            zadd.push(id.clone().into_bytes());
            audit.push(audit_json(AuditKind::Enqueued, id, None, 0));
        }
        commands.push(audit);
        commands.push(zadd);
        commands.push(cmd!["EXEC"]);
        let replies = self.run(&commands, Duration::ZERO)?;
        check(&replies)?;
        match replies.last() {
            Some(RespValue::Array(Some(results))) => check(results)?,
            other => return Err(BrokerError::Protocol(format!("batch transaction failed: {other:?}"))),
        }
        Ok(ids)
    }

    fn pop_next(&self, worker_id: &str, timeout: Duration) -> Result<Option<QueuedJob>, BrokerError> {
        if int_of(&self.one(cmd!["EXISTS", format!("worker:{worker_id}")], Duration::ZERO)?)? == 0 {
            return Err(BrokerError::LeaseExpired(worker_id.into()));
        }
        let reply = if timeout.is_zero() {
            self.one(cmd!["ZPOPMIN", QUEUE], Duration::ZERO)?
        } else {
            self.one(cmd!["BZPOPMIN", QUEUE, seconds(timeout)], timeout)?
        };
        match parse_popped(&reply)? {
            Some((id, score)) => self.lease(worker_id, &id, score).map(Some),
            None => Ok(None),
        }
    }

    fn push_result(&self, job_id: &str, result: &[u8]) -> Result<(), BrokerError> {
        let state = self.run(
            &[
                cmd!["EXISTS", format!("job:{job_id}")],
                cmd!["EXISTS", format!("pushed:{job_id}")],
                cmd!["PTTL", format!("chan:{job_id}")],
            ],
            Duration::ZERO,
        )?;
        check(&state)?;
        if int_of(&state[0])? == 0 {
            return Err(BrokerError::UnknownJob(job_id.into()));
        }
        if int_of(&state[1])? == 1 {
            return Err(BrokerError::DuplicateResult(job_id.into()));
        }
        let remaining = int_of(&state[2])?;
        if remaining <= 0 {
            return Err(BrokerError::ChannelExpired(job_id.into()));
        }
        let guard = self.one(cmd!["SET", format!("pushed:{job_id}"), "1", "NX", "PX", self.double_ttl()], Duration::ZERO)?;
        if guard.is_nil() {
            return Err(BrokerError::DuplicateResult(job_id.into()));
        }
        let attempts = int_of(&self.one(cmd!["GET", format!("attempts:{job_id}")], Duration::ZERO)?).unwrap_or(0);
        let replies = self.run(
            &[
                cmd!["GET", format!("lease:{job_id}")],
                cmd!["ZREM", QUEUE, job_id],
                cmd!["LREM", DEAD, "0", job_id],
                cmd!["RPUSH", format!("result:{job_id}"), result],
                cmd!["PEXPIRE", format!("result:{job_id}"), remaining.to_string()],
                cmd!["RPUSH", AUDIT, audit_json(AuditKind::Resulted, job_id, None, attempts as u32)],
            ],
            Duration::ZERO,
        )?;
        check(&replies)?;
        if let Some(worker) = bytes_of(&replies[0]) {
            let worker = String::from_utf8_lossy(worker);
            self.one(cmd!["SREM", format!("inflight:{worker}"), job_id], Duration::ZERO)?;
        }
        Ok(())
    }

    fn await_result(&self, job_id: &str, timeout: Duration) -> Result<Option<Vec<u8>>, BrokerError> {
        let status = |this: &Self| -> Result<Option<BrokerError>, BrokerError> {
            let replies = this.run(
                &[
                    cmd!["EXISTS", format!("consumed:{job_id}")],
                    cmd!["EXISTS", format!("job:{job_id}")],
                    cmd!["EXISTS", format!("chan:{job_id}")],
                ],
                Duration::ZERO,
            )?;
            check(&replies)?;
            Ok(if int_of(&replies[0])? == 1 {
                Some(BrokerError::AlreadyConsumed(job_id.into()))
            } else if int_of(&replies[1])? == 0 {
                Some(BrokerError::UnknownJob(job_id.into()))
            } else if int_of(&replies[2])? == 0 {
                Some(BrokerError::ChannelExpired(job_id.into()))
            } else {
                None
            })
        };
        if let Some(e) = status(self)? {
            return Err(e);
        }
        let key = format!("result:{job_id}");
        let reply = if timeout.is_zero() {
            self.one(cmd!["LPOP", key], Duration::ZERO)?
        } else {
            self.one(cmd!["BLPOP", key, seconds(timeout)], timeout)?
        };
        let bytes = match &reply {
            RespValue::Bulk(Some(b)) => b.clone(),
            RespValue::Array(Some(items)) if items.len() == 2 => {
                bytes_of(&items[1]).ok_or_else(|| BrokerError::Protocol("BLPOP value".into()))?.to_vec()
            }
            r if r.is_nil() => {
                return match status(self)? {
                    Some(e) => Err(e),
                    None => Ok(None),
                };
            }
            other => return Err(BrokerError::Protocol(format!("unexpected pop reply {other:?}"))),
        };
        let attempts = int_of(&self.one(cmd!["GET", format!("attempts:{job_id}")], Duration::ZERO)?).unwrap_or(0);
        let replies = self.run(
            &[
                cmd!["SET", format!("consumed:{job_id}"), "1", "PX", self.double_ttl()],
                cmd!["RPUSH", AUDIT, audit_json(AuditKind::Consumed, job_id, None, attempts as u32)],
            ],
            Duration::ZERO,
        )?;
        check(&replies)?;
        Ok(Some(bytes))
    }

    fn heartbeat(&self, worker_id: &str) -> Result<(), BrokerError> {
        let now = unix_millis().to_string();
        let replies = self.run(
            &[
                cmd!["SET", format!("worker:{worker_id}"), now, "PX", self.config.lease_ttl_ms.to_string()],
                cmd!["SET", format!("beat:{worker_id}"), now],
                cmd!["SADD", WORKERS, worker_id],
            ],
            Duration::ZERO,
        )?;
        check(&replies)
    }

    fn reap_dead(&self) -> Result<Vec<String>, BrokerError> {
        let workers = string_list(&self.one(cmd!["SMEMBERS", WORKERS], Duration::ZERO)?)?;
        if workers.is_empty() {
            return Ok(Vec::new());
        }
        let probes: Vec<_> = workers.iter().map(|w| cmd!["EXISTS", format!("worker:{w}")]).collect();
        let alive = self.run(&probes, Duration::ZERO)?;
        check(&alive)?;
        let mut dead: Vec<&String> =
            workers.iter().zip(&alive).filter(|(_, a)| int_of(a).unwrap_or(1) == 0).map(|(w, _)| w).collect();
        dead.sort();
        let mut requeued = Vec::new();
        for worker in dead {
            // Only the reaper that removes the worker handles its jobs.
            if int_of(&self.one(cmd!["SREM", WORKERS, worker], Duration::ZERO)?)? == 0 {
                continue;
            }
            let inflight = format!("inflight:{worker}");
            let replies = self.run(
                &[
                    cmd!["SMEMBERS", inflight],
                    cmd!["DEL", inflight, format!("beat:{worker}")],
                    cmd!["RPUSH", AUDIT, audit_json(AuditKind::WorkerReaped, worker, None, 0)],
                ],
                Duration::ZERO,
            )?;
            check(&replies)?;
            let mut held = string_list(&replies[0])?;
            held.sort();
            for id in held {
                let state = self.run(
                    &[
                        cmd!["EXISTS", format!("pushed:{id}")],
                        cmd!["GET", format!("lease:{id}")],
                        cmd!["GET", format!("score:{id}")],
                    ],
                    Duration::ZERO,
                )?;
                check(&state)?;
                let leased_here = bytes_of(&state[1]) == Some(worker.as_bytes());
                if int_of(&state[0])? == 1 || !leased_here {
                    continue;
                }
                let Ok(score) = int_of(&state[2]) else { continue };
                let attempts = int_of(&self.one(cmd!["INCR", format!("attempts:{id}")], Duration::ZERO)?)? as u32;
                let (kind, action) = if attempts > self.config.max_retries {
                    (AuditKind::DeadLettered, cmd!["RPUSH", DEAD, id])
                } else {
                    requeued.push(id.clone());
                    (AuditKind::Requeued, cmd!["ZADD", QUEUE, score.to_string(), id])
                };
                let replies = self.run(
                    &[
                        cmd!["DEL", format!("lease:{id}")],
                        action,
                        cmd!["RPUSH", AUDIT, audit_json(kind, &id, Some(worker), attempts)],
                    ],
                    Duration::ZERO,
                )?;
                check(&replies)?;
            }
        }
        requeued.sort();
        Ok(requeued)
    }

    fn workers(&self) -> Result<Vec<WorkerLease>, BrokerError> {
        let mut ids = string_list(&self.one(cmd!["SMEMBERS", WORKERS], Duration::ZERO)?)?;
        ids.sort();
        if ids.is_empty() {
            return Ok(Vec::new());
        }
        let mut probes = Vec::new();
        for w in &ids {
            probes.push(cmd!["EXISTS", format!("worker:{w}")]);
            probes.push(cmd!["GET", format!("beat:{w}")]);
        }
        let replies = self.run(&probes, Duration::ZERO)?;
        check(&replies)?;
        Ok(ids
            .into_iter()
            .zip(replies.chunks(2))
            .map(|(worker_id, r)| WorkerLease {
                worker_id,
                ttl_ms: self.config.lease_ttl_ms,
                last_beat_ms: int_of(&r[1]).unwrap_or(0) as u64,
                live: int_of(&r[0]).unwrap_or(0) == 1,
            })
            .collect())
    }

    fn queue_len(&self) -> Result<usize, BrokerError> {
        Ok(int_of(&self.one(cmd!["ZCARD", QUEUE], Duration::ZERO)?)? as usize)
    }

    fn dead_letters(&self) -> Result<Vec<String>, BrokerError> {
        string_list(&self.one(cmd!["LRANGE", DEAD, "0", "-1"], Duration::ZERO)?)
    }

    fn audit_log(&self) -> Result<Vec<AuditEvent>, BrokerError> {
        let reply = self.one(cmd!["LRANGE", AUDIT, "0", "-1"], Duration::ZERO)?;
        let RespValue::Array(Some(items)) = reply else {
            return Ok(Vec::new());
        };
        items
            .iter()
            .filter_map(bytes_of)
            .map(|b| serde_json::from_slice(b).map_err(|e| BrokerError::Protocol(format!("audit event: {e}"))))
            .collect()
    }

    fn ping(&self) -> Result<(), BrokerError> {
        match self.one(cmd!["PING"], Duration::ZERO)? {
            RespValue::Simple(s) if s == "PONG" => Ok(()),
            other => Err(BrokerError::Protocol(format!("unexpected PING reply {other:?}"))),
        }
    }
}
