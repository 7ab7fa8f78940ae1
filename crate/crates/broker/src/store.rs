//! Embedded key-value store speaking the subset of RESP that [`RespBroker`]
//! uses, for deployments and tests without an external store.
//!
//! Commands: PING, ECHO, FLUSHALL, DBSIZE, GET, SET (NX, PX, EX), MSET, DEL,
//! EXISTS, INCR, PEXPIRE, EXPIRE, PTTL, ZADD, ZCARD, ZREM, ZPOPMIN,
//! BZPOPMIN, RPUSH, LPOP, BLPOP, LRANGE, LLEN, LREM, SADD, SREM, SMEMBERS,
//! SCARD, MULTI, EXEC, DISCARD, QUIT. Blocking pops wait on one condition
//! variable that every write signals.
//!
//! [`RespBroker`]: crate::RespBroker

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::io::{self, BufRead, BufReader, ErrorKind, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crate::resp::RespValue;

/// Total order on finite scores.
#[derive(Debug, Clone, Copy)]
struct Score(f64);

impl PartialEq for Score {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}

impl Eq for Score {}

impl PartialOrd for Score {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Score {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Debug, Default)]
struct ZSet {
    by_score: BTreeSet<(Score, Vec<u8>)>,
    scores: HashMap<Vec<u8>, Score>,
}

impl ZSet {
    fn insert(&mut self, member: Vec<u8>, score: f64) -> bool {
        let fresh = match self.scores.insert(member.clone(), Score(score)) {
            Some(old) => {
                self.by_score.remove(&(old, member.clone()));
                false
            }
            None => true,
        };
        self.by_score.insert((Score(score), member));
        fresh
    }

    fn remove(&mut self, member: &[u8]) -> bool {
        match self.scores.remove(member) {
            Some(s) => self.by_score.remove(&(s, member.to_vec())),
            None => false,
        }
    }

    fn pop_min(&mut self) -> Option<(Vec<u8>, f64)> {
        let (score, member) = self.by_score.pop_first()?;
        self.scores.remove(&member);
        Some((member, score.0))
    }

    fn len(&self) -> usize {
        self.scores.len()
    }
}

#[derive(Debug)]
enum Value {
    Str(Vec<u8>),
    List(VecDeque<Vec<u8>>),
    Set(HashSet<Vec<u8>>),
    ZSet(ZSet),
}

impl Value {
    fn is_empty_collection(&self) -> bool {
        match self {
            Value::Str(_) => false,
            Value::List(l) => l.is_empty(),
            Value::Set(s) => s.is_empty(),
            Value::ZSet(z) => z.len() == 0,
        }
    }
}

#[derive(Debug)]
struct Entry {
    value: Value,
    expires: Option<Instant>,
}

#[derive(Debug, Default)]
struct Db {
    entries: HashMap<Vec<u8>, Entry>,
}

const WRONGTYPE: &str = "WRONGTYPE Operation against a key holding the wrong kind of value";

type Reply = Result<RespValue, String>;

fn format_score(s: f64) -> String {
    if s.fract() == 0.0 && s.abs() < 1e17 {
        format!("{}", s as i64)
    } else {
        format!("{s}")
    }
}

fn text(arg: &[u8]) -> Result<&str, String> {
    std::str::from_utf8(arg).map_err(|_| "ERR argument is not valid UTF-8".to_string())
}

fn int_arg(arg: &[u8]) -> Result<i64, String> {
    text(arg)?.parse().map_err(|_| "ERR value is not an integer or out of range".to_string())
}

fn float_arg(arg: &[u8]) -> Result<f64, String> {
    let v: f64 = text(arg)?.parse().map_err(|_| "ERR value is not a valid float".to_string())?;
    if v.is_nan() {
        return Err("ERR value is not a valid float".into());
    }
    Ok(v)
}

fn arity(args: &[Vec<u8>], min: usize) -> Result<(), String> {
    if args.len() < min {
        Err(format!("ERR wrong number of arguments for '{}' command", String::from_utf8_lossy(&args[0]).to_lowercase()))
    } else {
        Ok(())
    }
}

impl Db {
    fn live(&mut self, key: &[u8]) -> Option<&mut Entry> {
        let expired = self.entries.get(key).is_some_and(|e| e.expires.is_some_and(|t| Instant::now() >= t));
        if expired {
            self.entries.remove(key);
        }
        self.entries.get_mut(key)
    }

    fn drop_if_empty(&mut self, key: &[u8]) {
        if self.entries.get(key).is_some_and(|e| e.value.is_empty_collection()) {
            self.entries.remove(key);
        }
    }

    fn list(&mut self, key: &[u8], create: bool) -> Result<Option<&mut VecDeque<Vec<u8>>>, String> {
        if self.live(key).is_none() {
            if !create {
                return Ok(None);
            }
            self.entries.insert(key.to_vec(), Entry { value: Value::List(VecDeque::new()), expires: None });
        }
        match &mut self.entries.get_mut(key).expect("present").value {
            Value::List(l) => Ok(Some(l)),
            _ => Err(WRONGTYPE.into()),
        }
    }

    fn set(&mut self, key: &[u8], create: bool) -> Result<Option<&mut HashSet<Vec<u8>>>, String> {
        if self.live(key).is_none() {
            if !create {
                return Ok(None);
            }
            self.entries.insert(key.to_vec(), Entry { value: Value::Set(HashSet::new()), expires: None });
        }
        match &mut self.entries.get_mut(key).expect("present").value {
            Value::Set(s) => Ok(Some(s)),
            _ => Err(WRONGTYPE.into()),
        }
    }

    fn zset(&mut self, key: &[u8], create: bool) -> Result<Option<&mut ZSet>, String> {
        if self.live(key).is_none() {
            if !create {
                return Ok(None);
            }
            self.entries.insert(key.to_vec(), Entry { value: Value::ZSet(ZSet::default()), expires: None });
        }
        match &mut self.entries.get_mut(key).expect("present").value {
            Value::ZSet(z) => Ok(Some(z)),
            _ => Err(WRONGTYPE.into()),
        }
    }

    fn pop_min(&mut self, key: &[u8]) -> Result<Option<(Vec<u8>, f64)>, String> {
        let popped = match self.zset(key, false)? {
            Some(z) => z.pop_min(),
            None => None,
        };
        self.drop_if_empty(key);
        Ok(popped)
    }

    fn lpop(&mut self, key: &[u8]) -> Result<Option<Vec<u8>>, String> {
        let popped = match self.list(key, false)? {
            Some(l) => l.pop_front(),
            None => None,
        };
        self.drop_if_empty(key);
        Ok(popped)
    }

    /// Execute one non-blocking command. Blocking commands run once without
    /// waiting and return nil when nothing is available.
    fn exec(&mut self, args: &[Vec<u8>]) -> Reply {
        let name = String::from_utf8_lossy(&args[0]).to_ascii_uppercase();
        match name.as_str() {
            "PING" => Ok(match args.get(1) {
                Some(msg) => RespValue::bulk(msg.clone()),
                None => RespValue::Simple("PONG".into()),
            }),
            "ECHO" => {
                arity(args, 2)?;
                Ok(RespValue::bulk(args[1].clone()))
            }
            "FLUSHALL" | "FLUSHDB" => {
                self.entries.clear();
                Ok(RespValue::ok())
            }
            "DBSIZE" => {
                let now = Instant::now();
                self.entries.retain(|_, e| e.expires.is_none_or(|t| now < t));
                Ok(RespValue::Integer(self.entries.len() as i64))
            }
            "GET" => {
                arity(args, 2)?;
                match self.live(&args[1]) {
                    None => Ok(RespValue::nil()),
                    Some(Entry { value: Value::Str(s), .. }) => Ok(RespValue::bulk(s.clone())),
                    Some(_) => Err(WRONGTYPE.into()),
                }
            }
            "SET" => {
                arity(args, 3)?;
                let mut nx = false;
                let mut ttl = None;
                let mut i = 3;
                while i < args.len() {
                    match String::from_utf8_lossy(&args[i]).to_ascii_uppercase().as_str() {
                        "NX" => nx = true,
                        "PX" | "EX" => {
                            let unit = if args[i].eq_ignore_ascii_case(b"EX") { 1000 } else { 1 };
                            let v = int_arg(args.get(i + 1).ok_or("ERR syntax error")?)?;
                            if v <= 0 {
                                return Err("ERR invalid expire time in 'set' command".into());
                            }
                            ttl = Some(Duration::from_millis(v as u64 * unit));
                            i += 1;
                        }
                        _ => return Err("ERR syntax error".into()),
                    }
                    i += 1;
                }
                if nx && self.live(&args[1]).is_some() {
                    return Ok(RespValue::nil());
                }
                self.entries.insert(
                    args[1].clone(),
                    Entry { value: Value::Str(args[2].clone()), expires: ttl.map(|d| Instant::now() + d) },
                );
                Ok(RespValue::ok())
            }
            "MSET" => {
                if args.len() < 3 || args.len() % 2 == 0 {
                    return Err("ERR wrong number of arguments for 'mset' command".into());
                }
                for pair in args[1..].chunks(2) {
                    self.entries.insert(pair[0].clone(), Entry { value: Value::Str(pair[1].clone()), expires: None });
                }
                Ok(RespValue::ok())
            }
            "DEL" => {
                arity(args, 2)?;
                let n = args[1..].iter().filter(|k| self.live(k).is_some() && self.entries.remove(*k).is_some()).count();
                Ok(RespValue::Integer(n as i64))
            }
            "EXISTS" => {
                arity(args, 2)?;
                let n = args[1..].iter().filter(|k| self.live(k).is_some()).count();
                Ok(RespValue::Integer(n as i64))
            }
            "INCR" => {
                arity(args, 2)?;
                let current = match self.live(&args[1]) {
                    None => 0,
                    Some(Entry { value: Value::Str(s), .. }) => int_arg(s)?,
                    Some(_) => return Err(WRONGTYPE.into()),
                };
                let next = current.checked_add(1).ok_or("ERR increment or decrement would overflow")?;
                let expires = self.live(&args[1]).and_then(|e| e.expires);
                self.entries.insert(args[1].clone(), Entry { value: Value::Str(next.to_string().into_bytes()), expires });
                Ok(RespValue::Integer(next))
            }
            "PEXPIRE" | "EXPIRE" => {
                arity(args, 3)?;
                let unit = if name == "EXPIRE" { 1000 } else { 1 };
                let v = int_arg(&args[2])?;
                match self.live(&args[1]) {
                    None => Ok(RespValue::Integer(0)),
                    Some(_) if v <= 0 => {
                        self.entries.remove(&args[1]);
                        Ok(RespValue::Integer(1))
                    }
                    Some(e) => {
                        e.expires = Some(Instant::now() + Duration::from_millis(v as u64 * unit));
                        Ok(RespValue::Integer(1))
                    }
                }
            }
            "PTTL" => {
                arity(args, 2)?;
                Ok(RespValue::Integer(match self.live(&args[1]) {
                    None => -2,
                    Some(Entry { expires: None, .. }) => -1,
                    Some(Entry { expires: Some(t), .. }) => {
                        t.saturating_duration_since(Instant::now()).as_millis().max(1) as i64
                    }
                }))
            }
            "ZADD" => {
                if args.len() < 4 || args.len() % 2 != 0 {
                    return Err("ERR syntax error".into());
                }
                let pairs: Vec<(f64, Vec<u8>)> = args[2..]
                    .chunks(2)
                    .map(|p| Ok((float_arg(&p[0])?, p[1].clone())))
                    .collect::<Result<_, String>>()?;
                let z = self.zset(&args[1], true)?.expect("created");
                let added = pairs.into_iter().filter(|(s, m)| z.insert(m.clone(), *s)).count();
                Ok(RespValue::Integer(added as i64))
            }
            "ZCARD" => {
                arity(args, 2)?;
                Ok(RespValue::Integer(self.zset(&args[1], false)?.map_or(0, |z| z.len()) as i64))
            }
            "ZREM" => {
                arity(args, 3)?;
                let removed = match self.zset(&args[1], false)? {
                    Some(z) => args[2..].iter().filter(|m| z.remove(m)).count(),
                    None => 0,
                };
                self.drop_if_empty(&args[1]);
                Ok(RespValue::Integer(removed as i64))
            }
            "ZPOPMIN" => {
                arity(args, 2)?;
                let count = args.get(2).map(|c| int_arg(c)).transpose()?.unwrap_or(1).max(0);
                let mut out = Vec::new();
                for _ in 0..count {
                    match self.pop_min(&args[1])? {
                        Some((m, s)) => {
                            out.push(RespValue::bulk(m));
                            out.push(RespValue::bulk(format_score(s)));
                        }
                        None => break,
                    }
                }
                Ok(RespValue::Array(Some(out)))
            }
            "BZPOPMIN" => {
                arity(args, 3)?;
                for key in &args[1..args.len() - 1] {
                    if let Some((m, s)) = self.pop_min(key)? {
                        return Ok(RespValue::Array(Some(vec![
                            RespValue::bulk(key.clone()),
                            RespValue::bulk(m),
                            RespValue::bulk(format_score(s)),
                        ])));
                    }
                }
                Ok(RespValue::Array(None))
            }
            "RPUSH" => {
                arity(args, 3)?;
                let l = self.list(&args[1], true)?.expect("created");
                l.extend(args[2..].iter().cloned());
                Ok(RespValue::Integer(l.len() as i64))
            }
            "LPOP" => {
                arity(args, 2)?;
                Ok(match self.lpop(&args[1])? {
                    Some(v) => RespValue::bulk(v),
                    None => RespValue::nil(),
                })
            }
            "BLPOP" => {
                arity(args, 3)?;
                for key in &args[1..args.len() - 1] {
                    if let Some(v) = self.lpop(key)? {
                        return Ok(RespValue::Array(Some(vec![RespValue::bulk(key.clone()), RespValue::bulk(v)])));
                    }
                }
                Ok(RespValue::Array(None))
            }
            "LRANGE" => {
                arity(args, 4)?;
                let (start, stop) = (int_arg(&args[2])?, int_arg(&args[3])?);
                let Some(l) = self.list(&args[1], false)? else {
                    return Ok(RespValue::Array(Some(Vec::new())));
                };
                let len = l.len() as i64;
                let norm = |i: i64| if i < 0 { (len + i).max(0) } else { i };
                let (start, stop) = (norm(start), norm(stop).min(len - 1));
                let items = if start > stop {
                    Vec::new()
                } else {
                    l.range(start as usize..=stop as usize).map(|v| RespValue::bulk(v.clone())).collect()
                };
                Ok(RespValue::Array(Some(items)))
            }
            "LLEN" => {
                arity(args, 2)?;
                Ok(RespValue::Integer(self.list(&args[1], false)?.map_or(0, |l| l.len()) as i64))
            }
            "LREM" => {
                arity(args, 4)?;
                let count = int_arg(&args[2])?;
                let target = &args[3];
                let removed = match self.list(&args[1], false)? {
                    Some(l) => {
                        let limit = if count == 0 { usize::MAX } else { count.unsigned_abs() as usize };
                        let mut removed = 0;
                        if count >= 0 {
                            let mut i = 0;
                            while i < l.len() && removed < limit {
                                if &l[i] == target {
                                    l.remove(i);
                                    removed += 1;
                                } else {
                                    i += 1;
                                }
                            }
                        } else {
                            let mut i = l.len();
                            while i > 0 && removed < limit {
                                i -= 1;
                                if &l[i] == target {
                                    l.remove(i);
                                    removed += 1;
                                }
                            }
                        }
                        removed
                    }
                    None => 0,
                };
                self.drop_if_empty(&args[1]);
                Ok(RespValue::Integer(removed as i64))
            }
            "SADD" => {
                arity(args, 3)?;
                let s = self.set(&args[1], true)?.expect("created");
                Ok(RespValue::Integer(args[2..].iter().filter(|m| s.insert((*m).clone())).count() as i64))
            }
            "SREM" => {
                arity(args, 3)?;
                let removed = match self.set(&args[1], false)? {
                    Some(s) => args[2..].iter().filter(|m| s.remove(*m)).count(),
                    None => 0,
                };
                self.drop_if_empty(&args[1]);
                Ok(RespValue::Integer(removed as i64))
            }
            "SMEMBERS" => {
                arity(args, 2)?;
                let mut members: Vec<Vec<u8>> =
                    self.set(&args[1], false)?.map(|s| s.iter().cloned().collect()).unwrap_or_default();
                members.sort();
                Ok(RespValue::Array(Some(members.into_iter().map(RespValue::bulk).collect())))
            }
            "SCARD" => {
                arity(args, 2)?;
                Ok(RespValue::Integer(self.set(&args[1], false)?.map_or(0, |s| s.len()) as i64))
            }
            _ => Err(format!("ERR unknown command '{}'", String::from_utf8_lossy(&args[0]))),
        }
    }
}

#[derive(Debug, Default)]
struct Shared {
    db: Mutex<Db>,
    changed: Condvar,
    stop: AtomicBool,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, Db> {
        self.db.lock().unwrap_or_else(|e| e.into_inner())
    }
}

/// A running embedded store. Dropping it stops the listener; open
/// connections close within a poll interval.
#[derive(Debug)]
pub struct StoreServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    accept: Option<JoinHandle<()>>,
}

const POLL: Duration = Duration::from_millis(100);

impl StoreServer {
    /// Bind `addr` (use port 0 for an ephemeral port) and start serving.
    pub fn start(addr: &str) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared::default());
        let accept = {
            let shared = shared.clone();
            thread::Builder::new().name("store-accept".into()).spawn(move || {
                for stream in listener.incoming() {
                    if shared.stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let shared = shared.clone();
                    let _ = thread::Builder::new().name("store-conn".into()).spawn(move || {
                        if let Err(e) = serve(stream, &shared) {
                            tracing::debug!(error = %e, "store connection closed");
                        }
                    });
                }
            })?
        };
        tracing::info!(%addr, "embedded store listening");
        Ok(StoreServer { addr, shared, accept: Some(accept) })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// `redis://host:port` address for clients.
    pub fn url(&self) -> String {
        format!("redis://{}", self.addr)
    }

    /// Block until the server is dropped from another thread.
    pub fn wait(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for StoreServer {
    fn drop(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        self.shared.changed.notify_all();
        // Wake the accept loop.
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

fn blocking_timeout(args: &[Vec<u8>]) -> Result<Option<Instant>, String> {
    let secs = float_arg(args.last().expect("arity checked"))?;
    if secs < 0.0 {
        return Err("ERR timeout is negative".into());
    }
    Ok((secs > 0.0).then(|| Instant::now() + Duration::from_secs_f64(secs)))
}

fn serve(stream: TcpStream, shared: &Shared) -> io::Result<()> {
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(POLL))?;
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    let mut queued: Option<Vec<Vec<Vec<u8>>>> = None;
    loop {
        if shared.stop.load(Ordering::SeqCst) {
            return Ok(());
        }
        // Poll for the start of a message, then read it without a timeout
        // so a slow sender never leaves a half-consumed frame.
        if reader.buffer().is_empty() {
            match reader.fill_buf() {
                Ok([]) => return Ok(()),
                Ok(_) => {}
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => continue,
                Err(e) => return Err(e),
            }
        }
        reader.get_ref().set_read_timeout(None)?;
        let decoded = RespValue::decode(&mut reader);
        reader.get_ref().set_read_timeout(Some(POLL))?;
        let request = match decoded? {
            Some(v) => v,
            None => return Ok(()),
        };
        let args: Vec<Vec<u8>> = match request {
            RespValue::Array(Some(items)) => items
                .into_iter()
                .filter_map(|v| match v {
                    RespValue::Bulk(Some(b)) => Some(b),
                    RespValue::Simple(s) => Some(s.into_bytes()),
                    _ => None,
                })
                .collect(),
            _ => Vec::new(),
        };
        if args.is_empty() {
            continue;
        }
        let name = String::from_utf8_lossy(&args[0]).to_ascii_uppercase();
        let reply = match (name.as_str(), queued.as_mut()) {
            ("QUIT", _) => {
                write_reply(&mut writer, &RespValue::ok())?;
                return Ok(());
            }
            ("MULTI", Some(_)) => RespValue::Error("ERR MULTI calls can not be nested".into()),
            ("MULTI", None) => {
                queued = Some(Vec::new());
                RespValue::ok()
            }
            ("DISCARD", _) => match queued.take() {
                Some(_) => RespValue::ok(),
                None => RespValue::Error("ERR DISCARD without MULTI".into()),
            },
            ("EXEC", _) => match queued.take() {
                None => RespValue::Error("ERR EXEC without MULTI".into()),
                Some(commands) => {
                    let mut db = shared.lock();
                    let replies = commands
                        .iter()
                        .map(|c| db.exec(c).unwrap_or_else(RespValue::Error))
                        .collect();
                    drop(db);
                    shared.changed.notify_all();
                    RespValue::Array(Some(replies))
                }
            },
            (_, Some(q)) => {
                q.push(args);
                RespValue::Simple("QUEUED".into())
            }
            ("BZPOPMIN" | "BLPOP", None) => blocking(&args, shared),
            (_, None) => {
                let reply = shared.lock().exec(&args).unwrap_or_else(RespValue::Error);
                shared.changed.notify_all();
                reply
            }
        };
        write_reply(&mut writer, &reply)?;
    }
}

fn blocking(args: &[Vec<u8>], shared: &Shared) -> RespValue {
    if args.len() < 3 {
        return RespValue::Error(arity(args, 3).unwrap_err());
    }
    let deadline = match blocking_timeout(args) {
        Ok(d) => d,
        Err(e) => return RespValue::Error(e),
    };
    let mut db = shared.lock();
    loop {
        match db.exec(args) {
            Ok(v) if v.is_nil() => {}
            Ok(v) => {
                drop(db);
                shared.changed.notify_all();
                return v;
            }
            Err(e) => return RespValue::Error(e),
        }
        if shared.stop.load(Ordering::SeqCst) {
            return RespValue::Array(None);
        }
        let wait = match deadline {
            Some(d) => {
                let now = Instant::now();
                if now >= d {
                    return RespValue::Array(None);
                }
                (d - now).min(POLL)
            }
            None => POLL,
        };
        db = shared.changed.wait_timeout(db, wait).unwrap_or_else(|e| e.into_inner()).0;
    }
}

fn write_reply(writer: &mut TcpStream, reply: &RespValue) -> io::Result<()> {
    let mut out = Vec::new();
    reply.encode(&mut out);
    writer.write_all(&out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resp::RespConnection;

    fn args(words: &[&str]) -> Vec<Vec<u8>> {
        words.iter().map(|w| w.as_bytes().to_vec()).collect()
    }

    fn run(db: &mut Db, words: &[&str]) -> RespValue {
        db.exec(&args(words)).unwrap_or_else(RespValue::Error)
    }

    #[test]
    fn strings_and_expiry() {
        let mut db = Db::default();
        assert_eq!(run(&mut db, &["SET", "k", "v", "NX"]), RespValue::ok());
        assert!(run(&mut db, &["SET", "k", "w", "NX"]).is_nil());
        assert_eq!(run(&mut db, &["GET", "k"]), RespValue::bulk("v"));
        assert_eq!(run(&mut db, &["PTTL", "k"]), RespValue::Integer(-1));
        assert_eq!(run(&mut db, &["PTTL", "nope"]), RespValue::Integer(-2));
        run(&mut db, &["SET", "t", "1", "PX", "20"]);
        assert_eq!(run(&mut db, &["EXISTS", "t", "k", "nope"]), RespValue::Integer(2));
        thread::sleep(Duration::from_millis(30));
        assert_eq!(run(&mut db, &["EXISTS", "t"]), RespValue::Integer(0));
        assert_eq!(run(&mut db, &["INCR", "n"]), RespValue::Integer(1));
        assert_eq!(run(&mut db, &["INCR", "n"]), RespValue::Integer(2));
        assert!(matches!(run(&mut db, &["INCR", "k"]), RespValue::Error(_)));
        assert!(matches!(run(&mut db, &["LPOP", "k"]), RespValue::Error(e) if e.starts_with("WRONGTYPE")));
    }

    #[test]
    fn sorted_sets_pop_in_score_order() {
        let mut db = Db::default();
        assert_eq!(run(&mut db, &["ZADD", "q", "3", "c", "1", "a", "2", "b"]), RespValue::Integer(3));
        assert_eq!(run(&mut db, &["ZADD", "q", "0", "c"]), RespValue::Integer(0));
        assert_eq!(run(&mut db, &["ZREM", "q", "b"]), RespValue::Integer(1));
        let popped = run(&mut db, &["ZPOPMIN", "q"]);
        assert_eq!(popped, RespValue::Array(Some(vec![RespValue::bulk("c"), RespValue::bulk("0")])));
        let popped = run(&mut db, &["BZPOPMIN", "q", "0.1"]);
        assert_eq!(
            popped,
            RespValue::Array(Some(vec![RespValue::bulk("q"), RespValue::bulk("a"), RespValue::bulk("1")]))
        );
        assert_eq!(run(&mut db, &["ZCARD", "q"]), RespValue::Integer(0));
        assert_eq!(run(&mut db, &["EXISTS", "q"]), RespValue::Integer(0));
    }

    #[test]
    fn lists_and_sets() {
        let mut db = Db::default();
        run(&mut db, &["RPUSH", "l", "a", "b", "a", "c"]);
        assert_eq!(run(&mut db, &["LREM", "l", "0", "a"]), RespValue::Integer(2));
        assert_eq!(
            run(&mut db, &["LRANGE", "l", "0", "-1"]),
            RespValue::Array(Some(vec![RespValue::bulk("b"), RespValue::bulk("c")]))
        );
        assert_eq!(run(&mut db, &["LRANGE", "l", "5", "9"]), RespValue::Array(Some(vec![])));
        assert_eq!(run(&mut db, &["LLEN", "l"]), RespValue::Integer(2));
        run(&mut db, &["SADD", "s", "x", "y", "x"]);
        assert_eq!(run(&mut db, &["SCARD", "s"]), RespValue::Integer(2));
        assert_eq!(run(&mut db, &["SREM", "s", "x", "z"]), RespValue::Integer(1));
        assert_eq!(run(&mut db, &["SMEMBERS", "s"]), RespValue::Array(Some(vec![RespValue::bulk("y")])));
    }

    #[test]
    fn server_blocking_pop_and_transactions() {
        let server = StoreServer::start("127.0.0.1:0").unwrap();
        let addr = server.local_addr().to_string();
        let waiter = {
            let addr = addr.clone();
            thread::spawn(move || {
                let mut c = RespConnection::connect(&addr).unwrap();
                c.command(args(&["BLPOP", "ch", "5"]), Duration::from_secs(10)).unwrap()
            })
        };
        thread::sleep(Duration::from_millis(50));
        let mut c = RespConnection::connect(&addr).unwrap();
        let t = Duration::from_secs(1);
        let replies = c
            .pipeline(&[args(&["MULTI"]), args(&["RPUSH", "ch", "hello"]), args(&["SET", "k", "v"]), args(&["EXEC"])], t)
            .unwrap();
        assert_eq!(replies[1], RespValue::Simple("QUEUED".into()));
        assert_eq!(replies[3], RespValue::Array(Some(vec![RespValue::Integer(1), RespValue::ok()])));
        assert_eq!(
            waiter.join().unwrap(),
            RespValue::Array(Some(vec![RespValue::bulk("ch"), RespValue::bulk("hello")]))
        );
        let start = Instant::now();
        assert!(c.command(args(&["BZPOPMIN", "empty", "0.1"]), t).unwrap().is_nil());
        assert!(start.elapsed() >= Duration::from_millis(100));
        assert!(matches!(c.command(args(&["NOPE"]), t).unwrap(), RespValue::Error(_)));
    }
}
