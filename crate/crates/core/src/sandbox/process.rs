//! Process-based sandbox built on rlimits, a private network namespace and a
//! per-run scratch directory.
//!
//! Scratch layout: `input.txt`, `program.<ext>`, `stdout.txt`, `stderr.txt`.
//! The child runs in its own process group so the whole group can be killed
//! on timeout; only `PATH` and `LANG` survive from the parent environment.

use std::fs::{self, File};
use std::io::{self, Read};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitStatus, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use super::{ExecutionOutcome, ProgramSource, ResourceLimits, Sandbox, SandboxError, Verdict};

const SYNTAX_CHECK_SCRIPT: &str = r#"import sys
try:
    with open(sys.argv[1], 'rb') as f:
        compile(f.read(), 'program.py', 'exec', dont_inherit=True)
except (SyntaxError, ValueError) as e:
    sys.stderr.write('%s: %s\n' % (type(e).__name__, e))
    sys.exit(3)
"#;

const SYNTAX_ERROR_EXIT: i32 = 3;

const ENV_ALLOWLIST: [&str; 2] = ["PATH", "LANG"];

const MEMORY_ERROR_MARKERS: [&str; 4] =
    ["MemoryError", "Cannot allocate memory", "std::bad_alloc", "out of memory"];

/// How to invoke a target-language runtime.
#[derive(Debug, Clone)]
pub struct RuntimeSpec {
    pub interpreter: PathBuf,
    pub args: Vec<String>,
    pub extension: String,
}

impl RuntimeSpec {
    /// CPython in isolated mode without `site` (`-I -S`): no user site, no
    /// `PYTHON*` variables, no site-packages. Programs get the stdlib only.
    pub fn python3() -> Self {
        RuntimeSpec {
            interpreter: PathBuf::from("python3"),
            args: vec!["-I".into(), "-S".into()],
            extension: "py".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProcessSandbox {
    runtime: RuntimeSpec,
    scratch_root: Option<PathBuf>,
    isolate_network: bool,
    keep_scratch: bool,
    syntax_limits: ResourceLimits,
}

impl Default for ProcessSandbox {
    fn default() -> Self {
        Self::new(RuntimeSpec::python3())
    }
}

struct RawRun {
    status: ExitStatus,
    timed_out: bool,
    wall: Duration,
    cpu: Duration,
    peak_memory_bytes: u64,
    stdout: Vec<u8>,
    stdout_truncated: bool,
    stderr: Vec<u8>,
}

impl ProcessSandbox {
    pub fn new(runtime: RuntimeSpec) -> Self {
        ProcessSandbox {
            runtime,
            scratch_root: None,
            isolate_network: true,
            keep_scratch: false,
            syntax_limits: ResourceLimits {
                wall_time_ms: 10_000,
                cpu_time_ms: 10_000,
                memory_bytes: 1 << 30,
                output_cap_bytes: 1 << 20,
            },
        }
    }

    /// Create scratch directories under `root` instead of the system temp dir.
    pub fn with_scratch_root(mut self, root: impl Into<PathBuf>) -> Self {
        self.scratch_root = Some(root.into());
        self
    }

    /// Run children in a fresh network namespace (on by default). Setup
    /// fails with [`SandboxError::Setup`] when the host forbids it.
    pub fn with_network_isolation(mut self, isolate: bool) -> Self {
        self.isolate_network = isolate;
        self
    }

    /// Leave scratch directories on disk for inspection.
    pub fn keep_scratch(mut self, keep: bool) -> Self {
        self.keep_scratch = keep;
        self
    }

    pub fn runtime(&self) -> &RuntimeSpec {
        &self.runtime
    }

    fn scratch(&self) -> Result<tempfile::TempDir, SandboxError> {
        let mut builder = tempfile::Builder::new();
        builder.prefix("codeverif-run-");
        let dir = match &self.scratch_root {
            Some(root) => {
                fs::create_dir_all(root)?;
                builder.tempdir_in(root)
            }
            None => builder.tempdir(),
        };
        dir.map_err(|e| SandboxError::Setup(format!("cannot create scratch dir: {e}")))
    }

    fn program_name(&self) -> String {
        format!("program.{}", self.runtime.extension)
    }

    fn base_command(&self, dir: &Path, limits: &ResourceLimits) -> Command {
        let mut cmd = Command::new(&self.runtime.interpreter);
        cmd.args(&self.runtime.args).current_dir(dir).env_clear();
        for key in ENV_ALLOWLIST {
            if let Some(value) = std::env::var_os(key) {
                cmd.env(key, value);
            }
        }
        if std::env::var_os("PATH").is_none() {
            cmd.env("PATH", "/usr/local/bin:/usr/bin:/bin");
        }
        let memory = limits.memory_bytes;
        let cpu_secs = limits.cpu_time_ms.div_ceil(1000);
        let file_cap = limits.output_cap_bytes;
        let isolate = self.isolate_network;
        // SAFETY: the closure runs between fork and exec and only issues
        // async-signal-safe syscalls; it allocates nothing.
        unsafe {
            cmd.pre_exec(move || apply_child_limits(memory, cpu_secs, file_cap, isolate));
        }
        cmd
    }

    fn execute(
        &self,
        mut cmd: Command,
        stdin: File,
        limits: &ResourceLimits,
    ) -> Result<RawRun, SandboxError> {
        cmd.stdin(Stdio::from(stdin)).stdout(Stdio::piped()).stderr(Stdio::piped());
        let started = Instant::now();
        let mut child = cmd.spawn().map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => {
                SandboxError::RuntimeMissing(self.runtime.interpreter.display().to_string())
            }
            _ => SandboxError::Setup(format!("cannot spawn child: {e}")),
        })?;
        let pid = child.id() as libc::pid_t;
        let cap = usize::try_from(limits.output_cap_bytes).unwrap_or(usize::MAX);

        let (tx, rx) = mpsc::channel();
        let out_pipe = child.stdout.take().expect("stdout is piped");
        let err_pipe = child.stderr.take().expect("stderr is piped");
        let tx_err = tx.clone();
        thread::spawn(move || {
            let _ = tx.send((0u8, capture(out_pipe, cap)));
        });
        thread::spawn(move || {
            let _ = tx_err.send((1u8, capture(err_pipe, cap)));
        });

        let deadline = Duration::from_millis(limits.wall_time_ms);
        let mut timed_out = false;
        loop {
            if child_exited(pid)? {
                break;
            }
            let elapsed = started.elapsed();
            if elapsed >= deadline {
                timed_out = true;
                break;
            }
            let nap = (elapsed / 20).clamp(Duration::from_micros(500), Duration::from_millis(5));
            thread::sleep(nap.min(deadline - elapsed));
        }
        // The leader has exited (or timed out) but is not reaped yet, so the
        // group id cannot have been recycled.
        // SAFETY: plain syscall on a process group we created.
        unsafe {
            libc::kill(-pid, libc::SIGKILL);
        }
        let (status, rusage) = reap(pid)?;
        let wall = started.elapsed();
        // `child` was reaped manually; dropping it does not wait again.
        drop(child);

        let mut stdout = (Vec::new(), false);
        let mut stderr = (Vec::new(), false);
        let collect_deadline = Instant::now() + Duration::from_secs(2);
        for _ in 0..2 {
            let remaining = collect_deadline.saturating_duration_since(Instant::now());
            match rx.recv_timeout(remaining) {
                Ok((0, captured)) => stdout = captured,
                Ok((_, captured)) => stderr = captured,
                Err(_) => break,
            }
        }

        let cpu = timeval(rusage.ru_utime) + timeval(rusage.ru_stime);
        Ok(RawRun {
            status,
            timed_out,
            wall,
            cpu,
            peak_memory_bytes: (rusage.ru_maxrss.max(0) as u64) * 1024,
            stdout: stdout.0,
            stdout_truncated: stdout.1,
            stderr: stderr.0,
        })
    }
}

impl Sandbox for ProcessSandbox {
    fn check_syntax(&self, source: &ProgramSource) -> Result<Verdict, SandboxError> {
        let code = source.code().ok_or(SandboxError::NoProgram)?;
        let scratch = self.scratch()?;
        let program = self.program_name();
        fs::write(scratch.path().join(&program), code)?;
        let mut cmd = self.base_command(scratch.path(), &self.syntax_limits);
        cmd.arg("-c").arg(SYNTAX_CHECK_SCRIPT).arg(&program);
        let run = self.execute(cmd, File::open("/dev/null")?, &self.syntax_limits)?;
        match run.status.code() {
            Some(0) if !run.timed_out => Ok(Verdict::Pass),
            Some(SYNTAX_ERROR_EXIT) => Ok(Verdict::SyntaxError),
            _ => Err(SandboxError::Checker(format!(
                "checker exited with {:?}: {}",
                run.status,
                String::from_utf8_lossy(&run.stderr).trim()
            ))),
        }
    }

    fn run_one(
        &self,
        source: &ProgramSource,
        input: &str,
        limits: &ResourceLimits,
    ) -> Result<ExecutionOutcome, SandboxError> {
        limits.validate()?;
        let code = source.code().ok_or(SandboxError::NoProgram)?;
        let scratch = self.scratch()?;
        let dir = scratch.path();
        let program = self.program_name();
        fs::write(dir.join("input.txt"), input)?;
        fs::write(dir.join(&program), code)?;

        let mut cmd = self.base_command(dir, limits);
        cmd.arg(&program);
        let run = self.execute(cmd, File::open(dir.join("input.txt"))?, limits)?;

        fs::write(dir.join("stdout.txt"), &run.stdout)?;
        fs::write(dir.join("stderr.txt"), &run.stderr)?;
        if self.keep_scratch {
            let _ = scratch.keep();
        }

        let stderr = String::from_utf8_lossy(&run.stderr).into_owned();
        let cpu_time_ms = run.cpu.as_millis() as u64;
        let signal = run.status.signal();
        let exit_code = run.status.code().unwrap_or_else(|| -signal.unwrap_or(0));

        let verdict = if run.timed_out
            || cpu_time_ms > limits.cpu_time_ms
            || signal == Some(libc::SIGXCPU)
        {
            Verdict::TimeLimitExceeded
        } else if run.peak_memory_bytes >= limits.memory_bytes
            || (exit_code != 0 && MEMORY_ERROR_MARKERS.iter().any(|m| stderr.contains(m)))
        {
            Verdict::MemoryLimitExceeded
        } else if exit_code != 0 {
            Verdict::RuntimeError
        } else {
            Verdict::Pass
        };

        Ok(ExecutionOutcome {
            verdict,
            stdout: String::from_utf8_lossy(&run.stdout).into_owned(),
            stderr,
            wall_time_ms: run.wall.as_millis() as u64,
            cpu_time_ms,
            peak_memory_bytes: run.peak_memory_bytes,
            exit_code,
            stdout_truncated: run.stdout_truncated,
        })
    }
}

fn apply_child_limits(memory: u64, cpu_secs: u64, file_cap: u64, isolate: bool) -> io::Result<()> {
    fn set(resource: libc::__rlimit_resource_t, soft: u64, hard: u64) -> io::Result<()> {
        let lim = libc::rlimit { rlim_cur: soft as libc::rlim_t, rlim_max: hard as libc::rlim_t };
        // SAFETY: `lim` is a valid rlimit struct for the duration of the call.
        if unsafe { libc::setrlimit(resource, &lim) } != 0 {
            return Err(io::Error::last_os_error());
        }
        Ok(())
    }
    // SAFETY: setpgid/unshare are async-signal-safe syscalls.
    unsafe {
        if libc::setpgid(0, 0) != 0 {
            return Err(io::Error::last_os_error());
        }
    }
    set(libc::RLIMIT_AS, memory, memory)?;
    set(libc::RLIMIT_CPU, cpu_secs, cpu_secs + 1)?;
    set(libc::RLIMIT_FSIZE, file_cap, file_cap)?;
    set(libc::RLIMIT_CORE, 0, 0)?;
    if isolate {
        // SAFETY: see above.
        unsafe {
            if libc::unshare(libc::CLONE_NEWNET) != 0
                && libc::unshare(libc::CLONE_NEWUSER | libc::CLONE_NEWNET) != 0
            {
                return Err(io::Error::last_os_error());
            }
        }
    }
    Ok(())
}

fn capture(mut reader: impl Read, cap: usize) -> (Vec<u8>, bool) {
    let mut buf = Vec::new();
    let mut chunk = vec![0u8; 64 * 1024];
    let mut truncated = false;
    loop {
        match reader.read(&mut chunk) {
            Ok(0) => break,
            Ok(n) => {
                let room = cap.saturating_sub(buf.len());
                if n > room {
                    buf.extend_from_slice(&chunk[..room]);
                    truncated = true;
                } else {
                    buf.extend_from_slice(&chunk[..n]);
                }
            }
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(_) => break,
        }
    }
    (buf, truncated)
}

/// Has `pid` exited? Leaves the zombie in place so it can be reaped with
/// its resource usage.
fn child_exited(pid: libc::pid_t) -> Result<bool, SandboxError> {
    // SAFETY: zeroed siginfo_t is a valid out-parameter for waitid.
    let mut info: libc::siginfo_t = unsafe { std::mem::zeroed() };
    let flags = libc::WEXITED | libc::WNOHANG | libc::WNOWAIT;
    // SAFETY: `info` outlives the call.
    let rc = unsafe { libc::waitid(libc::P_PID, pid as libc::id_t, &mut info, flags) };
    if rc != 0 {
        let err = io::Error::last_os_error();
        if err.kind() == io::ErrorKind::Interrupted {
            return Ok(false);
        }
        return Err(SandboxError::Setup(format!("waitid failed: {err}")));
    }
    // SAFETY: waitid filled `info`; si_pid is 0 when no child changed state.
    Ok(unsafe { info.si_pid() } != 0)
}

fn reap(pid: libc::pid_t) -> Result<(ExitStatus, libc::rusage), SandboxError> {
    let mut status: libc::c_int = 0;
    // SAFETY: zeroed rusage is a valid out-parameter.
    let mut usage: libc::rusage = unsafe { std::mem::zeroed() };
    loop {
        // SAFETY: out-parameters outlive the call.
        let rc = unsafe { libc::wait4(pid, &mut status, 0, &mut usage) };
        if rc == pid {
            return Ok((ExitStatus::from_raw(status), usage));
        }
        let err = io::Error::last_os_error();
        if err.kind() != io::ErrorKind::Interrupted {
            return Err(SandboxError::Setup(format!("wait4 failed: {err}")));
        }
    }
}

fn timeval(tv: libc::timeval) -> Duration {
    Duration::from_secs(tv.tv_sec.max(0) as u64) + Duration::from_micros(tv.tv_usec.max(0) as u64)
}
