//! Subprocess harness with wall-clock timing and group kill.
//!
//! Every child goes into its own process group so a timeout can take down
//! the whole tree (OpenMP runtimes and compiler drivers both fork).

use std::io::Read;
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};

/// Bytes of combined output kept for diagnostics.
const EXCERPT_LIMIT: usize = 4096;

#[derive(Debug)]
pub struct RunOutput {
    /// Exit code, if the process exited normally.
    pub status: Option<i32>,
    pub success: bool,
    pub timed_out: bool,
    /// Wall-clock time from spawn to exit (or to the kill on timeout).
    pub elapsed: Duration,
    /// Tail of stderr, falling back to stdout when stderr was silent.
    pub output_tail: String,
    /// Process id, which doubles as the process group id.
    pub pid: u32,
}

/// Spawns `argv` and waits for it, killing the entire process group if it
/// outlives `timeout`. Output is drained continuously so children never
/// block on a full pipe.
pub fn run_with_timeout(
    argv: &[String],
    timeout: Option<Duration>,
    cwd: Option<&Path>,
) -> Result<RunOutput> {
    let (program, args) = argv
        .split_first()
        .ok_or_else(|| Error::InvalidRequest("empty command line".into()))?;
    let mut command = Command::new(program);
    command
        .args(args)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);
    if let Some(dir) = cwd {
        command.current_dir(dir);
    }

    let start = Instant::now();
    let mut child = command.spawn().map_err(|source| Error::Spawn {
        program: program.clone(),
        source,
    })?;
    let pid = child.id();

    let stdout = tail_reader(child.stdout.take().expect("stdout was piped"));
    let stderr = tail_reader(child.stderr.take().expect("stderr was piped"));

    let mut timed_out = false;
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break status;
        }
        if let Some(limit) = timeout {
            if start.elapsed() >= limit {
                timed_out = true;
                kill_group(pid);
                break child.wait()?;
            }
        }
        thread::sleep(Duration::from_millis(1));
    };
    let elapsed = start.elapsed();

    let stdout = stdout.join().unwrap_or_default();
    let stderr = stderr.join().unwrap_or_default();
    let output_tail = if stderr.trim().is_empty() { stdout } else { stderr };

    Ok(RunOutput {
        status: status.code(),
        success: !timed_out && status.success(),
        timed_out,
        elapsed,
        output_tail,
        pid,
    })
}

/// SIGKILL to the whole group. The child was made its own group leader, so
/// its pid is the group id.
fn kill_group(pid: u32) {
    unsafe {
        libc::kill(-(pid as i32), libc::SIGKILL);
    }
}

/// Reads a stream to the end on a helper thread, keeping only the tail.
fn tail_reader<R: Read + Send + 'static>(mut stream: R) -> thread::JoinHandle<String> {
    thread::spawn(move || {
        let mut tail = Vec::new();
        let mut chunk = [0u8; 4096];
        while let Ok(n) = stream.read(&mut chunk) {
            if n == 0 {
                break;
            }
            tail.extend_from_slice(&chunk[..n]);
            if tail.len() > EXCERPT_LIMIT {
                let cut = tail.len() - EXCERPT_LIMIT;
                tail.drain(..cut);
            }
        }
        String::from_utf8_lossy(&tail).into_owned()
    })
}
