use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{check_rows, Predictor};
use crate::data::{FeatureMeta, Observation};
use crate::error::{Error, Result};

/// Default time to wait for one response line.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Serialize)]
struct Request<'a> {
    id: u64,
    columns: Vec<&'a str>,
    rows: &'a [Observation],
}

#[derive(Deserialize)]
struct Response {
    id: u64,
    predictions: Vec<f64>,
}

struct Session {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
}

/// A predictor living in another process, spoken to with one JSON request
/// line and one JSON response line per batch over stdin/stdout.
///
/// Requests are serialized through a mutex; the process is reused across calls.
pub struct ExternalPredictor {
    features: Vec<FeatureMeta>,
    session: Mutex<Session>,
    timeout: Duration,
}

impl ExternalPredictor {
    pub fn spawn(command: &[String], features: Vec<FeatureMeta>, timeout: Duration) -> Result<Self> {
        let (program, args) =
            command.split_first().ok_or_else(|| Error::InvalidArgument("empty predictor command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::io(program, e))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(ExternalPredictor {
            features,
            session: Mutex::new(Session { child, stdin, lines: rx, next_id: 1 }),
            timeout,
        })
    }
}

impl Drop for ExternalPredictor {
    fn drop(&mut self) {
        if let Ok(s) = self.session.get_mut() {
            let _ = s.child.kill();
            let _ = s.child.wait();
        }
    }
}

impl Predictor for ExternalPredictor {
    fn features(&self) -> &[FeatureMeta] {
        &self.features
    }

    fn predict_batch(&self, rows: &[Observation]) -> Result<Vec<f64>> {
        check_rows(&self.features, rows)?;
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        let mut s = self.session.lock().map_err(|_| Error::Protocol("predictor session poisoned".into()))?;
        let id = s.next_id;
        s.next_id += 1;
        let request = Request { id, columns: self.features.iter().map(|f| f.name.as_str()).collect(), rows };
        let mut line = serde_json::to_string(&request)?;
        line.push('\n');
        s.stdin
            .write_all(line.as_bytes())
            .and_then(|_| s.stdin.flush())
            .map_err(|e| Error::Protocol(format!("cannot write to predictor process: {e}")))?;

        let raw = match s.lines.recv_timeout(self.timeout) {
            Ok(Ok(raw)) => raw,
            Ok(Err(e)) => return Err(Error::Protocol(format!("cannot read from predictor process: {e}"))),
            Err(RecvTimeoutError::Timeout) => {
                return Err(Error::Protocol(format!("no response within {:?}", self.timeout)))
            }
            Err(RecvTimeoutError::Disconnected) => return Err(Error::Protocol("predictor process exited".into())),
        };
        let response: Response =
            serde_json::from_str(&raw).map_err(|e| Error::Protocol(format!("malformed response ({e}): {raw}")))?;
        if response.id != id {
            return Err(Error::Protocol(format!("response id mismatch: sent {id}, received {}", response.id)));
        }
        if response.predictions.len() != rows.len() {
            return Err(Error::Protocol(format!(
                "length mismatch: sent {} rows, received {} predictions",
                rows.len(),
                response.predictions.len()
            )));
        }
        Ok(response.predictions)
    }
}
