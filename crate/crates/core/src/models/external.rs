use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::sync::{Arc, Mutex};

use super::protocol::{Request, Response, CAP_ESTIMATE_ATE, PROTOCOL_VERSION};
use super::{Diagnostics, FeatureMatrix, FittedModel, Learner, ModelKind, Task};
use crate::dataset::SimulatedDataset;
use crate::error::{Error, Result};

/// Where a model server lives: `tcp://host:port` (or bare `host:port`), or
/// `stdio:<command line>` to spawn a subprocess per connection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Tcp(String),
    Stdio { program: String, args: Vec<String> },
}

impl Endpoint {
    pub fn parse(text: &str) -> Result<Self> {
        if let Some(cmd) = text.strip_prefix("stdio:") {
            let mut words = cmd.split_whitespace().map(str::to_string);
            let program = words
                .next()
                .ok_or_else(|| Error::InvalidConfig(format!("endpoint `{text}` has no command")))?;
            return Ok(Endpoint::Stdio {
                program,
                args: words.collect(),
            });
        }
        let addr = text.strip_prefix("tcp://").unwrap_or(text);
        if addr.is_empty() || !addr.contains(':') {
            return Err(Error::InvalidConfig(format!(
                "endpoint `{text}` is neither tcp://host:port nor stdio:<command>"
            )));
        }
        Ok(Endpoint::Tcp(addr.to_string()))
    }
}

impl std::fmt::Display for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Endpoint::Tcp(a) => write!(f, "tcp://{a}"),
            Endpoint::Stdio { program, args } => write!(f, "stdio:{program} {}", args.join(" ")),
        }
    }
}

struct Connection {
    reader: Box<dyn BufRead + Send>,
    writer: Box<dyn Write + Send>,
    child: Option<Child>,
}

impl Connection {
    fn open(endpoint: &Endpoint) -> Result<Self> {
        let fail = |e: std::io::Error| Error::Connection {
            endpoint: endpoint.to_string(),
            message: e.to_string(),
        };
        match endpoint {
            Endpoint::Tcp(addr) => {
                let stream = TcpStream::connect(addr).map_err(fail)?;
                stream.set_nodelay(true).map_err(fail)?;
                let read_half = stream.try_clone().map_err(fail)?;
                Ok(Connection {
                    reader: Box::new(BufReader::new(read_half)),
                    writer: Box::new(stream),
                    child: None,
                })
            }
            Endpoint::Stdio { program, args } => {
                let mut child = Command::new(program)
                    .args(args)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(fail)?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                Ok(Connection {
                    reader: Box::new(BufReader::new(stdout)),
                    writer: Box::new(stdin),
                    child: Some(child),
                })
            }
        }
    }

    fn call(&mut self, req: &Request) -> Result<Response> {
        let mut line = serde_json::to_string(req)
            .map_err(|e| Error::Protocol(format!("cannot encode request: {e}")))?;
        line.push('\n');
        self.writer
            .write_all(line.as_bytes())
            .and_then(|_| self.writer.flush())
            .map_err(|e| Error::Protocol(format!("send failed: {e}")))?;
        let mut reply = String::new();
        let n = self
            .reader
            .read_line(&mut reply)
            .map_err(|e| Error::Protocol(format!("receive failed: {e}")))?;
        if n == 0 {
            return Err(Error::Protocol("server closed the connection".into()));
        }
        let resp: Response = serde_json::from_str(reply.trim_end())
            .map_err(|e| Error::Protocol(format!("malformed reply to {}: {e}", req.name())))?;
        if !resp.ok {
            return Err(Error::Server(
                resp.error.unwrap_or_else(|| "unspecified server error".into()),
            ));
        }
        Ok(resp)
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some(child) = &mut self.child {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// Pool of handshaken connections to one endpoint. Each connection carries
/// one request at a time; concurrent callers each check one out.
pub struct ExternalClient {
    endpoint: Endpoint,
    capabilities: Vec<String>,
    idle: Mutex<Vec<Connection>>,
    max_idle: usize,
    sent: Mutex<BTreeMap<&'static str, usize>>,
}

impl ExternalClient {
    /// Open one connection and perform the handshake, so an unreachable or
    /// incompatible server fails here rather than mid-study.
    pub fn connect(endpoint: &str, max_idle: usize) -> Result<Arc<Self>> {
        let endpoint = Endpoint::parse(endpoint)?;
        let client = ExternalClient {
            endpoint,
            capabilities: Vec::new(),
            idle: Mutex::new(Vec::new()),
            max_idle: max_idle.max(1),
            sent: Mutex::new(BTreeMap::new()),
        };
        let (conn, capabilities) = client.open()?;
        let client = ExternalClient {
            capabilities,
            ..client
        };
        client.idle.lock().expect("pool lock").push(conn);
        Ok(Arc::new(client))
    }

    pub fn endpoint(&self) -> &Endpoint {
        &self.endpoint
    }

    pub fn capabilities(&self) -> &[String] {
        &self.capabilities
    }

    /// Requests sent so far, by command name.
    pub fn sent_counts(&self) -> BTreeMap<&'static str, usize> {
        self.sent.lock().expect("stats lock").clone()
    }

    fn open(&self) -> Result<(Connection, Vec<String>)> {
        let mut conn = Connection::open(&self.endpoint)?;
        let resp = self.call(&mut conn, &Request::Hello { v: PROTOCOL_VERSION })?;
        if resp.v != Some(PROTOCOL_VERSION) {
            return Err(Error::Protocol(format!(
                "server speaks protocol {:?}, expected {PROTOCOL_VERSION}",
                resp.v
            )));
        }
        Ok((conn, resp.capabilities.unwrap_or_default()))
    }

    fn call(&self, conn: &mut Connection, req: &Request) -> Result<Response> {
        *self.sent.lock().expect("stats lock").entry(req.name()).or_default() += 1;
        conn.call(req)
    }

    fn checkout(&self) -> Result<Connection> {
        if let Some(c) = self.idle.lock().expect("pool lock").pop() {
            return Ok(c);
        }
        Ok(self.open()?.0)
    }

    fn checkin(&self, conn: Connection) {
        let mut idle = self.idle.lock().expect("pool lock");
        if idle.len() < self.max_idle {
            idle.push(conn);
        }
    }

    /// Run `f` on a pooled connection. Connections that hit a transport or
    /// protocol failure are dropped instead of being returned to the pool.
    fn with_connection<T>(&self, f: impl FnOnce(&mut Connection) -> Result<T>) -> Result<T> {
        let mut conn = self.checkout()?;
        let out = f(&mut conn);
        if matches!(out, Ok(_) | Err(Error::Server(_))) {
            self.checkin(conn);
        }
        out
    }

    /// Ask the server for a direct ATE estimate with its own interval.
    pub fn estimate_ate(&self, d: &SimulatedDataset) -> Result<(f64, f64, f64)> {
        if !self.capabilities.iter().any(|c| c == CAP_ESTIMATE_ATE) {
            return Err(Error::Protocol(format!(
                "{} does not advertise {CAP_ESTIMATE_ATE}",
                self.endpoint
            )));
        }
        let req = Request::EstimateAte {
            features: (0..d.n())
                .map(|i| d.z_row(i).iter().map(|&v| f64::from(v)).collect())
                .collect(),
            treatment: d.x().to_vec(),
            outcome: d.y().to_vec(),
        };
        let resp = self.with_connection(|c| self.call(c, &req))?;
        match (resp.ate, resp.lo, resp.hi) {
            (Some(a), Some(l), Some(h)) if a.is_finite() && l.is_finite() && h.is_finite() => {
                Ok((a, l, h))
            }
            _ => Err(Error::Protocol("estimate_ate reply lacks finite ate/lo/hi".into())),
        }
    }
}

/// Learner backed by a model server. Fit requests carry the task name as the
/// model field.
#[derive(Clone)]
pub struct ExternalLearner {
    client: Arc<ExternalClient>,
    task: Task,
}

impl ExternalLearner {
    pub fn new(client: Arc<ExternalClient>, task: Task) -> Self {
        ExternalLearner { client, task }
    }

    pub fn client(&self) -> &Arc<ExternalClient> {
        &self.client
    }
}

/// Connect to a model server for one task.
pub fn connect_external_model(endpoint: &str, task: Task) -> Result<ExternalLearner> {
    Ok(ExternalLearner::new(ExternalClient::connect(endpoint, 8)?, task))
}

impl Learner for ExternalLearner {
    fn kind(&self) -> ModelKind {
        ModelKind::External
    }

    fn fit(&self, x: &FeatureMatrix, y: &[u8], _task: Task) -> Result<Box<dyn FittedModel>> {
        let req = Request::Fit {
            model: self.task.as_str().to_string(),
            features: x.to_rows(),
            labels: y.to_vec(),
        };
        let mut conn = self.client.checkout()?;
        let resp = match self.client.call(&mut conn, &req) {
            Ok(r) => r,
            Err(e) => {
                if matches!(e, Error::Server(_)) {
                    self.client.checkin(conn);
                }
                return Err(e);
            }
        };
        let model_id = resp
            .model_id
            .ok_or_else(|| Error::Protocol("fit reply lacks model_id".into()))?;
        Ok(Box::new(ExternalModel {
            client: Arc::clone(&self.client),
            conn: Mutex::new(Some(conn)),
            model_id,
            cols: x.cols(),
            diagnostics: Diagnostics {
                converged: true,
                ..Diagnostics::default()
            },
        }))
    }
}

/// A model held by the server. It keeps the connection it was fitted on
/// (server state is per connection) and frees itself on drop.
struct ExternalModel {
    client: Arc<ExternalClient>,
    conn: Mutex<Option<Connection>>,
    model_id: String,
    cols: usize,
    diagnostics: Diagnostics,
}

impl FittedModel for ExternalModel {
    fn kind(&self) -> ModelKind {
        ModelKind::External
    }

    fn n_features(&self) -> usize {
        self.cols
    }

    fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        self.check_columns(x)?;
        let mut guard = self.conn.lock().expect("model connection lock");
        let conn = guard
            .as_mut()
            .ok_or_else(|| Error::Protocol("model connection was lost".into()))?;
        let req = Request::PredictProba {
            model_id: self.model_id.clone(),
            features: x.to_rows(),
        };
        let resp = match self.client.call(conn, &req) {
            Ok(r) => r,
            Err(e) => {
                if !matches!(e, Error::Server(_)) {
                    *guard = None;
                }
                return Err(e);
            }
        };
        let probs = resp
            .probs
            .ok_or_else(|| Error::Protocol("predict_proba reply lacks probs".into()))?;
        if probs.len() != x.rows() {
            return Err(Error::Protocol(format!(
                "asked for {} probabilities, got {}",
                x.rows(),
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Protocol(format!("probability {p} outside [0, 1]")));
        }
        Ok(probs)
    }
}

impl Drop for ExternalModel {
    fn drop(&mut self) {
        let conn = self.conn.get_mut().ok().and_then(Option::take);
        if let Some(mut conn) = conn {
            let req = Request::Free {
                model_id: self.model_id.clone(),
            };
            if self.client.call(&mut conn, &req).is_ok() {
                self.client.checkin(conn);
            }
        }
    }
}
