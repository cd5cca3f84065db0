//! Line-delimited JSON protocol for out-of-process models, version 1.
//!
//! Each request and each response is one JSON object on one line. Floats are
//! written in shortest round-trip form, so every `f64` survives the trip
//! bit for bit.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{FeatureMatrix, FittedModel, Learner, Task};
use crate::dataset::SimulatedDataset;
use crate::error::{Error, Result};

pub const PROTOCOL_VERSION: u32 = 1;
pub const CAP_FIT_PREDICT: &str = "fit_predict";
pub const CAP_ESTIMATE_ATE: &str = "estimate_ate";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
pub enum Request {
    Hello {
        v: u32,
    },
    Fit {
        model: String,
        features: Vec<Vec<f64>>,
        labels: Vec<u8>,
    },
    PredictProba {
        model_id: String,
        features: Vec<Vec<f64>>,
    },
    Free {
        model_id: String,
    },
    EstimateAte {
        features: Vec<Vec<f64>>,
        treatment: Vec<u8>,
        outcome: Vec<u8>,
    },
}

impl Request {
    pub fn name(&self) -> &'static str {
        match self {
            Request::Hello { .. } => "hello",
            Request::Fit { .. } => "fit",
            Request::PredictProba { .. } => "predict_proba",
            Request::Free { .. } => "free",
            Request::EstimateAte { .. } => "estimate_ate",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Response {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<u32>,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capabilities: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
}

impl Response {
    pub fn success() -> Self {
        Response {
            ok: true,
            ..Response::default()
        }
    }

    pub fn failure(message: impl Into<String>) -> Self {
        Response {
            ok: false,
            error: Some(message.into()),
            ..Response::default()
        }
    }
}

/// Direct ATE estimator served under `estimate_ate`: returns (ate, lo, hi).
pub type DirectEstimator = dyn Fn(&SimulatedDataset) -> Result<(f64, f64, f64)> + Send + Sync;

/// Reference server: answers fit/predict with an in-process learner and,
/// optionally, `estimate_ate` with a direct estimator.
#[derive(Clone)]
pub struct Server {
    learner: Arc<dyn Learner>,
    direct: Option<Arc<DirectEstimator>>,
}

impl Server {
    pub fn new(learner: Arc<dyn Learner>) -> Self {
        Server {
            learner,
            direct: None,
        }
    }

    pub fn with_direct(mut self, direct: Arc<DirectEstimator>) -> Self {
        self.direct = Some(direct);
        self
    }

    pub fn capabilities(&self) -> Vec<String> {
        let mut caps = vec![CAP_FIT_PREDICT.to_string()];
        if self.direct.is_some() {
            caps.push(CAP_ESTIMATE_ATE.to_string());
        }
        caps
    }

    /// Serve one connection until the peer closes it.
    pub fn serve_lines<R: BufRead, W: Write>(&self, reader: R, mut writer: W) -> Result<()> {
        let mut session = Session::default();
        for line in reader.lines() {
            let line = line.map_err(|e| Error::Protocol(format!("read failed: {e}")))?;
            if line.trim().is_empty() {
                continue;
            }
            let response = match serde_json::from_str::<Request>(&line) {
                Ok(req) => self.handle(&mut session, req),
                Err(e) => Response::failure(format!("malformed request: {e}")),
            };
            let mut text = serde_json::to_string(&response)
                .map_err(|e| Error::Protocol(format!("cannot encode response: {e}")))?;
            text.push('\n');
            writer
                .write_all(text.as_bytes())
                .and_then(|_| writer.flush())
                .map_err(|e| Error::Protocol(format!("write failed: {e}")))?;
        }
        Ok(())
    }

    /// Accept connections forever, one thread each.
    pub fn serve_tcp(self: Arc<Self>, listener: TcpListener) -> Result<()> {
        for stream in listener.incoming() {
            let stream = stream.map_err(|e| Error::Protocol(format!("accept failed: {e}")))?;
            let server = Arc::clone(&self);
            std::thread::spawn(move || {
                let Ok(read_half) = stream.try_clone() else {
                    return;
                };
                let _ = server.serve_lines(BufReader::new(read_half), stream);
            });
        }
        Ok(())
    }

    fn handle(&self, session: &mut Session, req: Request) -> Response {
        match self.dispatch(session, req) {
            Ok(r) => r,
            Err(e) => Response::failure(e.to_string()),
        }
    }

    fn dispatch(&self, session: &mut Session, req: Request) -> Result<Response> {
        match req {
            Request::Hello { v } => {
                if v != PROTOCOL_VERSION {
                    return Ok(Response::failure(format!(
                        "unsupported protocol version {v}, server speaks {PROTOCOL_VERSION}"
                    )));
                }
                Ok(Response {
                    v: Some(PROTOCOL_VERSION),
                    capabilities: Some(self.capabilities()),
                    ..Response::success()
                })
            }
            Request::Fit {
                model,
                features,
                labels,
            } => {
                let task = match model.as_str() {
                    "propensity" => Task::Propensity,
                    _ => Task::Outcome,
                };
                let x = FeatureMatrix::from_rows(&features)?;
                let fitted = self.learner.fit(&x, &labels, task)?;
                session.next_id += 1;
                let id = format!("m{}", session.next_id);
                session.models.insert(id.clone(), fitted);
                Ok(Response {
                    model_id: Some(id),
                    ..Response::success()
                })
            }
            Request::PredictProba { model_id, features } => {
                let model = session
                    .models
                    .get(&model_id)
                    .ok_or_else(|| Error::Protocol(format!("unknown model_id `{model_id}`")))?;
                let x = if features.is_empty() {
                    FeatureMatrix::new(0, model.n_features(), vec![])?
                } else {
                    FeatureMatrix::from_rows(&features)?
                };
                Ok(Response {
                    probs: Some(model.predict_proba(&x)?),
                    ..Response::success()
                })
            }
            Request::Free { model_id } => match session.models.remove(&model_id) {
                Some(_) => Ok(Response::success()),
                None => Ok(Response::failure(format!("unknown model_id `{model_id}`"))),
            },
            Request::EstimateAte {
                features,
                treatment,
                outcome,
            } => {
                let Some(direct) = &self.direct else {
                    return Ok(Response::failure("estimate_ate is not supported by this server"));
                };
                let d = features.first().map_or(0, Vec::len);
                let z: Vec<Vec<u8>> = features
                    .iter()
                    .map(|r| r.iter().map(|&v| u8::from(v != 0.0)).collect())
                    .collect();
                let names = (0..d).map(|j| format!("z{j}")).collect();
                let data = SimulatedDataset::from_rows(names, &z, treatment, outcome)?;
                let (ate, lo, hi) = direct(&data)?;
                Ok(Response {
                    ate: Some(ate),
                    lo: Some(lo),
                    hi: Some(hi),
                    ..Response::success()
                })
            }
        }
    }
}

#[derive(Default)]
struct Session {
    next_id: u64,
    models: HashMap<String, Box<dyn FittedModel>>,
}
