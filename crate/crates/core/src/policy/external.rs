//! Host side of the line-delimited JSON policy protocol.
//!
//! ```text
//! -> {"type":"init","width":W,"height":H,"blocked":[[x,y],...],"starts":[...],"goals":[...],"seed":S}
//! <- {"type":"ready"}
//! -> {"type":"step","t":T,"positions":[[x,y],...]}
//! <- {"type":"dist","t":T,"dists":[[pU,pD,pL,pR,pW],...]}
//! -> {"type":"end","status":"success"|"failure"}
//! ```

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::ordering::ActionDistribution;
use super::provider::{PolicyError, PolicyProvider};
use crate::grid::{Cell, Instance};

pub const DEFAULT_STEP_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum HostMessage<'a> {
    Init {
        width: u32,
        height: u32,
        blocked: Vec<[u32; 2]>,
        starts: Vec<[u32; 2]>,
        goals: Vec<[u32; 2]>,
        seed: u64,
    },
    Step {
        t: usize,
        positions: Vec<[u32; 2]>,
    },
    End {
        status: &'a str,
    },
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum ClientMessage {
    Ready,
    Dist { t: usize, dists: Vec<Vec<f64>> },
}

fn xy(cells: &[Cell]) -> Vec<[u32; 2]> {
    cells.iter().map(|c| [c.x, c.y]).collect()
}

/// A policy answered by a child process over stdin/stdout.
pub struct ExternalPolicy {
    cmd: String,
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
    n_agents: usize,
    steps: usize,
    total_latency: Duration,
}

impl ExternalPolicy {
    /// Start `cmd` through `sh -c` and perform the init handshake.
    pub fn spawn(cmd: &str, inst: &Instance, seed: u64, timeout: Duration) -> Result<Self, PolicyError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(cmd)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| PolicyError::Spawn {
                cmd: cmd.to_string(),
                source,
            })?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        let mut host = Self {
            cmd: cmd.to_string(),
            child,
            stdin,
            lines: rx,
            timeout,
            n_agents: inst.n_agents(),
            steps: 0,
            total_latency: Duration::ZERO,
        };
        host.send(
            &HostMessage::Init {
                width: inst.map.width(),
                height: inst.map.height(),
                blocked: xy(&inst.map.blocked_cells().collect::<Vec<_>>()),
                starts: xy(&inst.starts),
                goals: xy(&inst.goals),
                seed,
            },
            None,
        )?;
        match host.recv(None)? {
            ClientMessage::Ready => Ok(host),
            ClientMessage::Dist { .. } => Err(PolicyError::Protocol {
                step: None,
                msg: "expected `ready`, got `dist`".into(),
            }),
        }
    }

    fn send(&mut self, msg: &HostMessage<'_>, step: Option<usize>) -> Result<(), PolicyError> {
        let mut line = serde_json::to_string(msg).expect("host messages serialise");
        line.push('\n');
        let stdin = self.stdin.as_mut().ok_or(PolicyError::Exited { step })?;
        stdin
            .write_all(line.as_bytes())
            .and_then(|_| stdin.flush())
            .map_err(|source| match source.kind() {
                std::io::ErrorKind::BrokenPipe => PolicyError::Exited { step },
                _ => PolicyError::Io { step, source },
            })
    }

    fn recv(&mut self, step: Option<usize>) -> Result<ClientMessage, PolicyError> {
        let line = match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(source)) => return Err(PolicyError::Io { step, source }),
            Err(RecvTimeoutError::Timeout) => return Err(PolicyError::Timeout { step }),
            Err(RecvTimeoutError::Disconnected) => return Err(PolicyError::Exited { step }),
        };
        serde_json::from_str(&line).map_err(|e| PolicyError::Protocol {
            step,
            msg: format!("{e}: `{}`", line.chars().take(120).collect::<String>()),
        })
    }

    pub fn command(&self) -> &str {
        &self.cmd
    }

    pub fn mean_latency(&self) -> Duration {
        if self.steps == 0 {
            Duration::ZERO
        } else {
            self.total_latency / self.steps as u32
        }
    }
}

impl PolicyProvider for ExternalPolicy {
    fn distributions(&mut self, t: usize, config: &[Cell]) -> Result<Vec<ActionDistribution>, PolicyError> {
        let started = Instant::now();
        self.send(
            &HostMessage::Step {
                t,
                positions: xy(config),
            },
            Some(t),
        )?;
        let (rt, dists) = match self.recv(Some(t))? {
            ClientMessage::Dist { t, dists } => (t, dists),
            ClientMessage::Ready => {
                return Err(PolicyError::Protocol {
                    step: Some(t),
                    msg: "expected `dist`, got `ready`".into(),
                })
            }
        };
        if rt != t {
            return Err(PolicyError::Protocol {
                step: Some(t),
                msg: format!("reply is for step {rt}"),
            });
        }
        if dists.len() != self.n_agents {
            return Err(PolicyError::CountMismatch {
                step: t,
                expected: self.n_agents,
                found: dists.len(),
            });
        }
        let out = dists
            .iter()
            .enumerate()
            .map(|(agent, p)| {
                ActionDistribution::from_external(p).map_err(|source| PolicyError::InvalidDistribution {
                    step: t,
                    agent,
                    source,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.total_latency += started.elapsed();
        self.steps += 1;
        Ok(out)
    }

    fn finish(&mut self, success: bool) {
        let status = if success { "success" } else { "failure" };
        let _ = self.send(&HostMessage::End { status }, None);
        self.stdin = None;
        let deadline = Instant::now() + Duration::from_millis(500);
        while Instant::now() < deadline {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            thread::sleep(Duration::from_millis(5));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }

    fn stats(&self) -> Vec<(String, String)> {
        vec![
            ("policy_steps".into(), self.steps.to_string()),
            ("policy_latency_us".into(), self.mean_latency().as_micros().to_string()),
        ]
    }

    fn label(&self) -> String {
        "external".into()
    }
}

impl Drop for ExternalPolicy {
    fn drop(&mut self) {
        self.stdin = None;
        if let Ok(None) = self.child.try_wait() {
            let _ = self.child.kill();
        }
        let _ = self.child.wait();
    }
}
