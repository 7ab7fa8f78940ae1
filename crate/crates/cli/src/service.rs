use std::future::Future;
use std::io::Write;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use anyhow::{Context, Result};
use tokio::signal::unix::{signal, SignalKind};

use codeverif_broker::{connect, Broker, StoreServer};
use codeverif_core::sandbox::{ProcessSandbox, ResourceLimits};
use codeverif_gateway::{run_worker, runtime, serve, Gateway, GatewayConfig, WorkerOptions, WorkerStats};

use crate::args::{usage_error, ServeArgs, WorkArgs};
use crate::table::Table;

/// Install SIGINT and SIGTERM handlers now, so a signal sent right after the
/// startup banner is not lost; the future resolves on either. Needs a runtime
/// context.
fn shutdown_signal() -> std::io::Result<impl Future<Output = ()>> {
    let mut interrupt = signal(SignalKind::interrupt())?;
    let mut terminate = signal(SignalKind::terminate())?;
    Ok(async move {
        tokio::select! {
            _ = interrupt.recv() => {}
            _ = terminate.recv() => {}
        }
    })
}

fn spawn_workers(
    broker: &Arc<dyn Broker>,
    count: usize,
    prefix: &str,
    lease_ttl: Duration,
    stop: &Arc<AtomicBool>,
) -> Vec<thread::JoinHandle<(String, WorkerStats)>> {
    (0..count)
        .map(|i| {
            let (broker, stop) = (broker.clone(), stop.clone());
            let options = WorkerOptions::new(format!("{prefix}-{i}"), lease_ttl);
            thread::Builder::new()
                .name(options.worker_id.clone())
                .spawn(move || {
                    let stats = run_worker(&*broker, &ProcessSandbox::default(), &options, &stop);
                    (options.worker_id, stats)
                })
                .expect("spawn worker thread")
        })
        .collect()
}

fn join_workers(handles: Vec<thread::JoinHandle<(String, WorkerStats)>>) -> Vec<(String, WorkerStats)> {
    handles.into_iter().filter_map(|h| h.join().ok()).collect()
}

pub fn run_serve(args: ServeArgs) -> Result<()> {
    let config = args.broker.config();
    let store = match &args.embedded_store {
        Some(addr) => Some(StoreServer::start(addr).with_context(|| format!("starting store on {addr}"))?),
        None => None,
    };
    let address = store.as_ref().map_or(args.broker.broker.clone(), StoreServer::url);
    let in_memory = matches!(address.as_str(), "mem" | "memory");
    let broker: Arc<dyn Broker> = Arc::from(connect(&address, config)?);
    let workers = args.workers.unwrap_or(if in_memory { 4 } else { 0 });
    if in_memory && workers == 0 {
        usage_error("--broker mem needs at least one in-process worker");
    }
    if args.sweep_ms == 0 || args.max_waiters == 0 {
        usage_error("--sweep-ms and --max-waiters must be positive");
    }
    let gateway = Arc::new(Gateway::new(
        broker.clone(),
        GatewayConfig {
            default_limits: args.limits.apply(ResourceLimits::default()),
            granularity: args.granularity.into(),
            task_dir: args.task_dir.clone(),
            audit_path: args.audit.clone(),
            max_waiters: args.max_waiters,
            sweep_interval: Duration::from_millis(args.sweep_ms),
            ..GatewayConfig::default()
        },
    )?);

    let stop = Arc::new(AtomicBool::new(false));
    let handles = spawn_workers(&broker, workers, "serve", Duration::from_millis(config.lease_ttl_ms), &stop);
    let rt = runtime(&gateway)?;
    let served = rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&args.bind)
            .await
            .with_context(|| format!("binding {}", args.bind))?;
        let addr = listener.local_addr()?;
        let shutdown = shutdown_signal()?;
        if let Some(store) = &store {
            println!("store:     {}", store.url());
        }
        println!("broker:    {address}");
        println!("workers:   {workers}");
        println!("listening: http://{addr}");
        std::io::stdout().flush()?;
        serve(listener, gateway, shutdown).await.context("serving")
    });
    stop.store(true, Ordering::SeqCst);
    join_workers(handles);
    rt.shutdown_timeout(Duration::from_secs(1));
    served
}

pub fn run_work(args: WorkArgs) -> Result<()> {
    if matches!(args.broker.broker.as_str(), "mem" | "memory") {
        usage_error("work needs a shared broker such as redis://host:port");
    }
    if args.parallelism == 0 {
        usage_error("--parallelism must be positive");
    }
    let config = args.broker.config();
    let broker: Arc<dyn Broker> = Arc::from(connect(&args.broker.broker, config)?);
    let prefix = args.id.clone().unwrap_or_else(|| format!("worker-{}", std::process::id()));
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build()?;
    let shutdown = {
        let _context = rt.enter();
        shutdown_signal()?
    };
    let stop = Arc::new(AtomicBool::new(false));
    let handles = spawn_workers(&broker, args.parallelism, &prefix, Duration::from_millis(config.lease_ttl_ms), &stop);
    println!("workers: {} on {}", args.parallelism, args.broker.broker);
    std::io::stdout().flush()?;
    rt.block_on(shutdown);
    stop.store(true, Ordering::SeqCst);
    let stats = join_workers(handles);
    let mut table = Table::new(["worker", "jobs", "failures"]);
    for (id, s) in &stats {
        table.row([id.clone(), s.jobs.to_string(), s.failures.to_string()]);
    }
    table.print();
    Ok(())
}
