//! Executor that runs the GPU harness as one subprocess per request.
//!
//! The request document goes to the child's stdin, the reply is read from
//! its stdout. All clones of an executor share one GPU lease, so at most one
//! request is in flight per device however many workflows run.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use kernopt_core::exec::{ExecError, ExecMode, ExecRequest, ExecResponse, ExecTimes, Executor};
use kernopt_core::{ProfilerExport, RunReport};
use wait_timeout::ChildExt;

use crate::transcript::profile_from_response;

const STDERR_TAIL: usize = 4000;

#[derive(Debug, Clone)]
pub struct SubprocessExecutor {
    command: Vec<String>,
    lease: Arc<Mutex<()>>,
    /// Added to the request timeout before the child is killed.
    pub grace_s: f64,
}

enum Outcome {
    Reply(ExecResponse, f64),
    TimedOut(f64),
}

fn tail(bytes: &[u8]) -> String {
    let s = String::from_utf8_lossy(bytes);
    let start = s.char_indices().rev().nth(STDERR_TAIL - 1).map_or(0, |(i, _)| i);
    s[start..].to_string()
}

fn parse_reply(stdout: &[u8]) -> Option<ExecResponse> {
    let text = String::from_utf8_lossy(stdout);
    serde_json::from_str(text.trim())
        .ok()
        .or_else(|| text.lines().rev().find(|l| !l.trim().is_empty()).and_then(|l| serde_json::from_str(l).ok()))
}

impl SubprocessExecutor {
    pub fn new(command: Vec<String>) -> Self {
        Self::with_lease(command, Arc::new(Mutex::new(())))
    }

    pub fn with_lease(command: Vec<String>, lease: Arc<Mutex<()>>) -> Self {
        Self { command, lease, grace_s: 5.0 }
    }

    fn invoke(&self, req: &ExecRequest) -> Result<Outcome, ExecError> {
        req.validate().map_err(|e| ExecError::Protocol(e.to_string()))?;
        let (program, args) =
            self.command.split_first().ok_or_else(|| ExecError::Unavailable("no harness command configured".into()))?;
        let payload = serde_json::to_vec(req).map_err(|e| ExecError::Protocol(e.to_string()))?;

        let _lease = self.lease.lock().unwrap_or_else(|p| p.into_inner());
        let start = Instant::now();
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| ExecError::Unavailable(format!("{program}: {e}")))?;
        let mut stdin = child.stdin.take().expect("piped");
        let writer = thread::spawn(move || {
            let _ = stdin.write_all(&payload);
        });
        let mut out = child.stdout.take().expect("piped");
        let mut err = child.stderr.take().expect("piped");
        let out_reader = thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = out.read_to_end(&mut buf);
            buf
        });
        let err_reader = thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = err.read_to_end(&mut buf);
            buf
        });

        let limit = Duration::from_secs_f64((req.timeout_s + self.grace_s).max(0.0));
        let status = child.wait_timeout(limit).map_err(|e| ExecError::Unavailable(e.to_string()))?;
        let status = match status {
            Some(s) => s,
            None => {
                let _ = child.kill();
                let _ = child.wait();
                let _ = writer.join();
                let _ = out_reader.join();
                let _ = err_reader.join();
                return Ok(Outcome::TimedOut(start.elapsed().as_secs_f64()));
            }
        };
        let _ = writer.join();
        let stdout = out_reader.join().unwrap_or_default();
        let stderr = err_reader.join().unwrap_or_default();
        let elapsed = start.elapsed().as_secs_f64();

        let mut resp = parse_reply(&stdout).ok_or_else(|| {
            ExecError::Protocol(format!("harness exited with {status} without a reply; stderr: {}", tail(&stderr)))
        })?;
        if !resp.request_id.is_empty() && resp.request_id != req.request_id {
            return Err(ExecError::Protocol(format!(
                "reply is for `{}`, expected `{}`",
                resp.request_id, req.request_id
            )));
        }
        if resp.stderr_tail.is_empty() {
            resp.stderr_tail = tail(&stderr);
        }
        Ok(Outcome::Reply(resp, elapsed))
    }
}

fn times(resp: &ExecResponse, elapsed: f64) -> ExecTimes {
    if resp.compile_s == 0.0 && resp.execute_s == 0.0 {
        ExecTimes { compile_s: 0.0, execute_s: elapsed }
    } else {
        ExecTimes { compile_s: resp.compile_s, execute_s: resp.execute_s }
    }
}

impl Executor for SubprocessExecutor {
    fn test(&mut self, req: &ExecRequest) -> Result<(RunReport, ExecTimes), ExecError> {
        debug_assert_eq!(req.mode, ExecMode::Test);
        match self.invoke(req)? {
            Outcome::Reply(resp, elapsed) => {
                let t = times(&resp, elapsed);
                Ok((resp.into_report(req.tolerance)?, t))
            }
            Outcome::TimedOut(elapsed) => Ok((
                RunReport::compile_failure(format!("Timeout: harness exceeded {} s", req.timeout_s)),
                ExecTimes { compile_s: 0.0, execute_s: elapsed },
            )),
        }
    }

    fn profile(&mut self, req: &ExecRequest) -> Result<(ProfilerExport, ExecTimes), ExecError> {
        match self.invoke(req)? {
            Outcome::Reply(resp, elapsed) => {
                let t = times(&resp, elapsed);
                profile_from_response(resp, req).map(|(e, _)| (e, t))
            }
            Outcome::TimedOut(_) => Err(ExecError::Timeout(format!("profiler exceeded {} s", req.timeout_s))),
        }
    }
}
