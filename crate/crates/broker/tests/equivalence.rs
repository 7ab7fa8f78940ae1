use std::sync::OnceLock;
use std::thread;
use std::time::Duration;

use codeverif_broker::{
    AuditEvent, AuditKind, Broker, BrokerConfig, BrokerError, MemoryBroker, RespBroker, RespConnection, StoreServer,
};
use proptest::prelude::*;

fn server() -> &'static StoreServer {
    static SERVER: OnceLock<StoreServer> = OnceLock::new();
    SERVER.get_or_init(|| StoreServer::start("127.0.0.1:0").unwrap())
}

/// A fresh store on its own server, so tests can run in parallel.
fn fresh_store(config: BrokerConfig) -> (StoreServer, RespBroker) {
    let server = StoreServer::start("127.0.0.1:0").unwrap();
    let broker = RespBroker::new(&server.local_addr().to_string(), config);
    (server, broker)
}

/// Audit trail without timestamps.
fn trail(b: &dyn Broker) -> Vec<(AuditKind, String, Option<String>, u32)> {
    b.audit_log()
        .unwrap()
        .into_iter()
        .map(|AuditEvent { kind, subject, worker, attempts, .. }| (kind, subject, worker, attempts))
        .collect()
}

#[derive(Debug, Clone)]
enum Op {
    Enqueue(u8),
    Beat(u8),
    Pop(u8),
    Push(u8, u8),
    Await(u8),
}

fn arb_op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0u8..4).prop_map(Op::Enqueue),
        (0u8..3).prop_map(Op::Beat),
        (0u8..3).prop_map(Op::Pop),
        (0u8..12, any::<u8>()).prop_map(|(j, v)| Op::Push(j, v)),
        (0u8..12).prop_map(Op::Await),
    ]
}

/// Observable outcome of one operation.
fn apply(b: &dyn Broker, op: &Op, ids: &mut Vec<String>) -> String {
    let job = |j: u8, ids: &Vec<String>| ids.get(j as usize).cloned().unwrap_or_else(|| format!("99.{j}"));
    match op {
        Op::Enqueue(n) => {
            let payloads: Vec<Vec<u8>> = (0..*n).map(|i| vec![i, *n]).collect();
            let out = b.enqueue(&payloads);
            if let Ok(new) = &out {
                ids.extend(new.iter().cloned());
            }
            format!("{out:?}")
        }
        Op::Beat(w) => format!("{:?}", b.heartbeat(&format!("w{w}"))),
        Op::Pop(w) => match b.pop_next(&format!("w{w}"), Duration::ZERO) {
            Ok(Some(j)) => format!("job {} {:?} {}", j.job_id, j.payload, j.attempts),
            other => format!("{other:?}"),
        },
        Op::Push(j, v) => format!("{:?}", b.push_result(&job(*j, ids), &[*v])),
        Op::Await(j) => format!("{:?}", b.await_result(&job(*j, ids), Duration::ZERO)),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn memory_and_store_agree(ops in prop::collection::vec(arb_op(), 1..40)) {
        let config = BrokerConfig { max_queue_len: 10, ..Default::default() };
        let mem = MemoryBroker::new(config);
        let addr = server().local_addr().to_string();
        RespConnection::connect(&addr).unwrap().command(vec![b"FLUSHALL".to_vec()], Duration::from_secs(5)).unwrap();
        let store = RespBroker::new(&addr, config);
        let (mut mem_ids, mut store_ids) = (Vec::new(), Vec::new());
        for op in &ops {
            let a = apply(&mem, op, &mut mem_ids);
            let b = apply(&store, op, &mut store_ids);
            prop_assert_eq!(a, b, "diverged on {:?}", op);
        }
        prop_assert_eq!(trail(&mem), trail(&store));
        prop_assert_eq!(mem.queue_len().unwrap(), store.queue_len().unwrap());
        let live = |b: &dyn Broker| b.workers().unwrap().into_iter().map(|w| (w.worker_id, w.live)).collect::<Vec<_>>();
        prop_assert_eq!(live(&mem), live(&store));
    }
}

fn reap_scenario(b: &dyn Broker) -> Vec<String> {
    let mut log = Vec::new();
    let ids = b.enqueue(&[b"a".to_vec(), b"b".to_vec()]).unwrap();
    for round in 0..4 {
        b.heartbeat("doomed").unwrap();
        b.heartbeat("steady").unwrap();
        let job = b.pop_next("doomed", Duration::ZERO).unwrap();
        log.push(format!("round {round} popped {:?}", job.map(|j| (j.job_id, j.attempts))));
        thread::sleep(Duration::from_millis(120));
        b.heartbeat("steady").unwrap();
        log.push(format!("reaped {:?}", b.reap_dead()));
        log.push(format!("queue {:?} dead {:?}", b.queue_len(), b.dead_letters()));
    }
    b.heartbeat("steady").unwrap();
    let job = b.pop_next("steady", Duration::ZERO).unwrap().unwrap();
    log.push(format!("steady got {} {}", job.job_id, job.attempts));
    b.push_result(&job.job_id, b"done").unwrap();
    log.push(format!("{:?}", b.await_result(&job.job_id, Duration::from_millis(50))));
    log.push(format!("{:?}", b.await_result(&job.job_id, Duration::ZERO)));
    log.push(format!("{:?}", b.await_result(&ids[0], Duration::ZERO)));
    log.push(format!("late push {:?}", b.push_result(&ids[0], b"late")));
    log.push(format!("dead after {:?}", b.dead_letters()));
    log
}

#[test]
fn reaping_matches_across_backends() {
    let config = BrokerConfig { lease_ttl_ms: 80, ..Default::default() };
    let mem = MemoryBroker::new(config);
    let (_server, store) = fresh_store(config);
    let a = reap_scenario(&mem);
    let b = reap_scenario(&store);
    assert_eq!(a, b);
    assert!(a.iter().any(|l| l.contains("dead Ok([\"1.0\"])")), "{a:#?}");
    assert_eq!(trail(&mem), trail(&store));
    let kinds: Vec<AuditKind> = trail(&store).into_iter().map(|e| e.0).collect();
    assert_eq!(kinds.iter().filter(|k| **k == AuditKind::Requeued).count(), 3);
    assert_eq!(kinds.iter().filter(|k| **k == AuditKind::DeadLettered).count(), 1);
}

#[test]
fn large_batch_uses_constant_round_trips() {
    let (_server, store) = fresh_store(BrokerConfig::default());
    let payloads: Vec<Vec<u8>> = (0..1000u32).map(|i| i.to_le_bytes().to_vec()).collect();
    let before = store.round_trips();
    let ids = store.enqueue(&payloads).unwrap();
    let batch_trips = store.round_trips() - before;
    let before = store.round_trips();
    store.enqueue(&payloads[..1]).unwrap();
    assert_eq!(batch_trips, store.round_trips() - before);
    assert!(batch_trips <= 3, "{batch_trips}");
    assert_eq!(ids.len(), 1000);
    assert_eq!(store.queue_len().unwrap(), 1001);

    store.heartbeat("w").unwrap();
    for (i, id) in ids.iter().enumerate().take(50) {
        let job = store.pop_next("w", Duration::ZERO).unwrap().unwrap();
        assert_eq!(&job.job_id, id);
        assert_eq!(job.payload, payloads[i]);
    }
}

#[test]
fn blocking_calls_wake_across_connections() {
    let (_server, store) = fresh_store(BrokerConfig::default());
    let store = std::sync::Arc::new(store);
    store.heartbeat("w").unwrap();
    let popper = {
        let store = store.clone();
        thread::spawn(move || store.pop_next("w", Duration::from_secs(5)).unwrap())
    };
    thread::sleep(Duration::from_millis(50));
    let ids = store.enqueue(&[b"x".to_vec()]).unwrap();
    let job = popper.join().unwrap().unwrap();
    assert_eq!(job.job_id, ids[0]);
    let waiter = {
        let store = store.clone();
        let id = ids[0].clone();
        thread::spawn(move || store.await_result(&id, Duration::from_secs(5)))
    };
    thread::sleep(Duration::from_millis(50));
    store.push_result(&ids[0], b"r").unwrap();
    assert_eq!(waiter.join().unwrap(), Ok(Some(b"r".to_vec())));
    assert_eq!(store.push_result(&ids[0], b"r"), Err(BrokerError::DuplicateResult(ids[0].clone())));
    assert_eq!(store.pop_next("w", Duration::from_millis(100)).unwrap(), None);
}

#[test]
fn channel_expiry_over_the_store() {
    let config = BrokerConfig { result_ttl_ms: 60, ..Default::default() };
    let (_server, store) = fresh_store(config);
    let ids = store.enqueue(&[vec![1], vec![2]]).unwrap();
    store.push_result(&ids[0], b"early").unwrap();
    thread::sleep(Duration::from_millis(90));
    assert_eq!(store.push_result(&ids[1], b"y"), Err(BrokerError::ChannelExpired(ids[1].clone())));
    assert_eq!(store.await_result(&ids[0], Duration::ZERO), Err(BrokerError::ChannelExpired(ids[0].clone())));
}

#[test]
fn connect_by_url() {
    let server = StoreServer::start("127.0.0.1:0").unwrap();
    let b = codeverif_broker::connect(&server.url(), BrokerConfig::default()).unwrap();
    assert!(b.ping().is_ok());
    drop(server);
    assert!(matches!(
        codeverif_broker::connect("redis://127.0.0.1:1", BrokerConfig::default()),
        Err(BrokerError::Unreachable(_))
    ));
}
