//! External-process classifier adapter.
//!
//! Messages are framed as a 4-byte little-endian length followed by that many
//! bytes of JSON. The client opens with a handshake:
//!
//! ```text
//! -> {"id":0,"op":"handshake"}
//! <- {"id":0,"provider":"...","class_count":2,"input_shape":[3,32,32]}
//! -> {"id":1,"op":"infer","image":{"shape":[3,32,32],"data_b64_f32le":"..."}}
//! <- {"id":1,"scores":[0.7,0.3],"features":{"shape":[4,8,8],"data_b64_f32le":"..."}}
//! ```
//!
//! A server may answer any request with `{"id":n,"error":"..."}`.

use std::io::{ErrorKind, Read, Write};
use std::process::{Child, Command, Stdio};
use std::sync::Mutex;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{Classifier, Inference};
use crate::error::{Error, Result};
use crate::tensor::{FeatureStack, ScoreVector, Tensor};

/// Slack allowed on the sum of adapter-reported probabilities.
pub const ADAPTER_SCORE_TOLERANCE: f64 = 1e-4;

const MAX_FRAME: usize = 256 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedTensor {
    pub shape: Vec<usize>,
    pub data_b64_f32le: String,
}

impl EncodedTensor {
    pub fn encode(t: &Tensor) -> Self {
        let mut bytes = Vec::with_capacity(t.len() * 4);
        for &v in t.data() {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        EncodedTensor {
            shape: t.shape().to_vec(),
            data_b64_f32le: B64.encode(bytes),
        }
    }

    pub fn decode(&self) -> Result<Tensor> {
        let bytes = B64
            .decode(&self.data_b64_f32le)
            .map_err(|e| Error::Protocol(format!("bad base64 tensor payload: {e}")))?;
        if bytes.len() % 4 != 0 {
            return Err(Error::Protocol("tensor payload is not a multiple of 4 bytes".into()));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Tensor::new(self.shape.clone(), data).map_err(|e| Error::Protocol(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Request {
    Handshake { id: u64 },
    Infer { id: u64, image: EncodedTensor },
    Shutdown { id: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Response {
    Handshake {
        id: u64,
        provider: String,
        class_count: usize,
        input_shape: [usize; 3],
    },
    Infer {
        id: u64,
        scores: Vec<f64>,
        features: EncodedTensor,
    },
    Error {
        id: u64,
        error: String,
    },
    Ack {
        id: u64,
    },
}

impl Response {
    fn id(&self) -> u64 {
        match self {
            Response::Handshake { id, .. }
            | Response::Infer { id, .. }
            | Response::Error { id, .. }
            | Response::Ack { id } => *id,
        }
    }
}

/// Writes one length-prefixed JSON frame.
pub fn write_frame<W: Write + ?Sized, T: Serialize>(w: &mut W, msg: &T) -> Result<()> {
    let body = serde_json::to_vec(msg).map_err(|e| Error::Protocol(e.to_string()))?;
    let len = u32::try_from(body.len())
        .map_err(|_| Error::Protocol("frame exceeds 4 GiB".into()))?;
    let io = |e: std::io::Error| Error::Transport(format!("write failed: {e}"));
    w.write_all(&len.to_le_bytes()).map_err(io)?;
    w.write_all(&body).map_err(io)?;
    w.flush().map_err(io)
}

/// Reads one frame. `Ok(None)` signals a clean end of stream before a frame starts.
pub fn read_frame<R: Read + ?Sized, T: for<'de> Deserialize<'de>>(r: &mut R) -> Result<Option<T>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(Error::Transport(format!("read failed: {e}"))),
    }
    let len = u32::from_le_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(Error::Protocol(format!("frame of {len} bytes exceeds limit")));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof => Error::Transport("stream ended mid-frame".into()),
        _ => Error::Transport(format!("read failed: {e}")),
    })?;
    serde_json::from_slice(&body)
        .map(Some)
        .map_err(|e| Error::Protocol(format!("malformed message: {e}")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdapterInfo {
    pub provider: String,
    pub class_count: usize,
    pub input_shape: [usize; 3],
}

/// Single-owner connection to an adapter process.
pub struct AdapterClient {
    reader: Box<dyn Read + Send>,
    writer: Box<dyn Write + Send>,
    child: Option<Child>,
    next_id: u64,
    info: AdapterInfo,
}

impl std::fmt::Debug for AdapterClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AdapterClient")
            .field("info", &self.info)
            .field("next_id", &self.next_id)
            .finish()
    }
}

impl AdapterClient {
    /// Spawns `program args…` with piped stdio and performs the handshake.
    pub fn spawn(program: &str, args: &[String]) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Transport(format!("cannot start adapter `{program}`: {e}")))?;
        let writer = child.stdin.take().expect("stdin piped");
        let reader = child.stdout.take().expect("stdout piped");
        Self::connect(Box::new(reader), Box::new(writer), Some(child))
    }

    pub fn from_streams(
        reader: impl Read + Send + 'static,
        writer: impl Write + Send + 'static,
    ) -> Result<Self> {
        Self::connect(Box::new(reader), Box::new(writer), None)
    }

    fn connect(
        reader: Box<dyn Read + Send>,
        writer: Box<dyn Write + Send>,
        child: Option<Child>,
    ) -> Result<Self> {
        let mut client = AdapterClient {
            reader,
            writer,
            child,
            next_id: 0,
            info: AdapterInfo {
                provider: String::new(),
                class_count: 0,
                input_shape: [0; 3],
            },
        };
        let id = client.fresh_id();
        match client.round_trip(&Request::Handshake { id })? {
            Response::Handshake {
                provider,
                class_count,
                input_shape,
                ..
            } => {
                if class_count == 0 || input_shape.contains(&0) {
                    return Err(Error::Contract(
                        "handshake advertised an empty class set or input shape".into(),
                    ));
                }
                client.info = AdapterInfo {
                    provider,
                    class_count,
                    input_shape,
                };
                Ok(client)
            }
            other => Err(Error::Protocol(format!(
                "expected handshake response, got {other:?}"
            ))),
        }
    }

    pub fn info(&self) -> &AdapterInfo {
        &self.info
    }

    fn fresh_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    fn round_trip(&mut self, req: &Request) -> Result<Response> {
        let id = match req {
            Request::Handshake { id } | Request::Infer { id, .. } | Request::Shutdown { id } => *id,
        };
        if let Err(e) = write_frame(&mut self.writer, req) {
            return Err(self.exit_context(e));
        }
        let resp: Response = match read_frame(&mut self.reader) {
            Ok(Some(r)) => r,
            Ok(None) => {
                return Err(self.exit_context(Error::Transport(
                    "adapter closed its output stream".into(),
                )))
            }
            Err(e) => return Err(self.exit_context(e)),
        };
        if resp.id() != id {
            return Err(Error::Protocol(format!(
                "response id {} does not match request id {id}",
                resp.id()
            )));
        }
        if let Response::Error { error, .. } = resp {
            return Err(Error::Protocol(format!("adapter reported: {error}")));
        }
        Ok(resp)
    }

    fn exit_context(&mut self, err: Error) -> Error {
        let Some(child) = self.child.as_mut() else {
            return err;
        };
        match child.try_wait() {
            Ok(Some(status)) => Error::Transport(format!("adapter exited ({status}): {err}")),
            _ => err,
        }
    }

    pub fn infer(&mut self, image: &Tensor) -> Result<Inference> {
        let expected = self.info.input_shape;
        if image.shape() != expected {
            return Err(Error::ShapeMismatch {
                expected: expected.to_vec(),
                actual: image.shape().to_vec(),
            });
        }
        let id = self.fresh_id();
        let req = Request::Infer {
            id,
            image: EncodedTensor::encode(image),
        };
        match self.round_trip(&req)? {
            Response::Infer {
                scores, features, ..
            } => {
                if scores.len() != self.info.class_count {
                    return Err(Error::Contract(format!(
                        "adapter returned {} scores for a {}-class model",
                        scores.len(),
                        self.info.class_count
                    )));
                }
                let scores = ScoreVector::new(scores, ADAPTER_SCORE_TOLERANCE)
                    .map_err(|e| Error::Contract(e.to_string()))?;
                let features = FeatureStack::new(features.decode()?)
                    .map_err(|e| Error::Contract(e.to_string()))?;
                Ok(Inference { scores, features })
            }
            other => Err(Error::Protocol(format!(
                "expected infer response, got {other:?}"
            ))),
        }
    }
}

impl Drop for AdapterClient {
    fn drop(&mut self) {
        if let Some(mut child) = self.child.take() {
            let id = self.next_id;
            let _ = write_frame(&mut self.writer, &Request::Shutdown { id });
            let _ = child.wait();
        }
    }
}

/// A [`Classifier`] backed by an adapter process.
#[derive(Debug)]
pub struct ExternalModel {
    client: Mutex<AdapterClient>,
    info: AdapterInfo,
}

impl ExternalModel {
    pub fn new(client: AdapterClient) -> Self {
        let info = client.info().clone();
        ExternalModel {
            client: Mutex::new(client),
            info,
        }
    }

    pub fn spawn(program: &str, args: &[String]) -> Result<Self> {
        AdapterClient::spawn(program, args).map(Self::new)
    }
}

impl Classifier for ExternalModel {
    fn input_shape(&self) -> [usize; 3] {
        self.info.input_shape
    }

    fn class_count(&self) -> usize {
        self.info.class_count
    }

    fn infer(&self, image: &Tensor) -> Result<Inference> {
        self.client
            .lock()
            .map_err(|_| Error::Transport("adapter handle poisoned".into()))?
            .infer(image)
    }

    fn provider(&self) -> String {
        format!("external:{}", self.info.provider)
    }
}

/// Serves `classifier` over the adapter protocol until end of stream or shutdown.
pub fn serve<R: Read, W: Write>(classifier: &dyn Classifier, mut reader: R, mut writer: W) -> Result<()> {
    while let Some(req) = read_frame::<_, Request>(&mut reader)? {
        let resp = match req {
            Request::Handshake { id } => Response::Handshake {
                id,
                provider: classifier.provider(),
                class_count: classifier.class_count(),
                input_shape: classifier.input_shape(),
            },
            Request::Infer { id, image } => match image.decode().and_then(|t| classifier.infer(&t)) {
                Ok(inf) => Response::Infer {
                    id,
                    scores: inf.scores.probs().to_vec(),
                    features: EncodedTensor::encode(inf.features.as_tensor()),
                },
                Err(e) => Response::Error {
                    id,
                    error: e.to_string(),
                },
            },
            Request::Shutdown { id } => {
                write_frame(&mut writer, &Response::Ack { id })?;
                return Ok(());
            }
        };
        write_frame(&mut writer, &resp)?;
    }
    Ok(())
}
