//! Client side of the generation protocol spoken by the model bridge.
//!
//! Requests are `{"id": uid, "prompt": ...}` and responses `{"id": uid,
//! "text": ...}`, either as one JSON object per line over TCP or as the body
//! of `POST /generate`. `{"op": "ping"}` must be answered with `{"ok": true}`.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{GenerationError, GenerationTask, Generator, Source};

pub const ADDR_ENV: &str = "LEAP_BRIDGE_ADDR";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BridgeAddr {
    /// `host:port` for newline-delimited JSON.
    Tcp(String),
    /// Base URL; requests go to `{base}/generate`.
    Http(String),
}

impl std::str::FromStr for BridgeAddr {
    type Err = GenerationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.starts_with("http://") || s.starts_with("https://") {
            Ok(Self::Http(s.trim_end_matches('/').to_string()))
        } else if let Some(rest) = s.strip_prefix("tcp://") {
            Ok(Self::Tcp(rest.to_string()))
        } else if s.contains(':') && !s.contains('/') {
            Ok(Self::Tcp(s.to_string()))
        } else {
            Err(GenerationError::BadAddress(s.to_string()))
        }
    }
}

impl BridgeAddr {
    pub fn from_env() -> Result<Self, GenerationError> {
        std::env::var(ADDR_ENV)
            .map_err(|_| GenerationError::BadAddress(format!("{ADDR_ENV} is not set")))?
            .parse()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub id: u64,
    pub prompt: String,
}

/// Exactly one of `text` and `error` is expected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PingRequest {
    pub op: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PingResponse {
    pub ok: bool,
}

#[derive(Debug, Clone)]
pub struct BridgeClient {
    addr: BridgeAddr,
    timeout: Duration,
    agent: ureq::Agent,
}

impl BridgeClient {
    pub fn new(addr: BridgeAddr, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            addr,
            timeout,
            agent,
        }
    }

    pub fn addr(&self) -> &BridgeAddr {
        &self.addr
    }

    fn exchange_line<Q: Serialize, A: for<'de> Deserialize<'de>>(
        &self,
        hostport: &str,
        request: &Q,
    ) -> Result<A, GenerationError> {
        let stream = TcpStream::connect(hostport)?;
        stream.set_read_timeout(Some(self.timeout))?;
        stream.set_write_timeout(Some(self.timeout))?;
        let mut writer = stream.try_clone()?;
        let mut line = serde_json::to_vec(request)?;
        line.push(b'\n');
        writer.write_all(&line)?;
        writer.flush()?;
        let mut reply = String::new();
        BufReader::new(stream).read_line(&mut reply)?;
        if reply.is_empty() {
            return Err(GenerationError::Protocol("connection closed without a reply".into()));
        }
        serde_json::from_str(reply.trim_end())
            .map_err(|e| GenerationError::Protocol(format!("bad reply {:?}: {e}", reply.trim_end())))
    }

    fn exchange_http<Q: Serialize, A: for<'de> Deserialize<'de>>(
        &self,
        base: &str,
        request: &Q,
    ) -> Result<A, GenerationError> {
        let mut resp = self
            .agent
            .post(format!("{base}/generate"))
            .send_json(request)
            .map_err(|e| GenerationError::Transport(e.to_string()))?;
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| GenerationError::Transport(e.to_string()))?;
        serde_json::from_str(&body)
            .map_err(|e| GenerationError::Protocol(format!("bad reply {body:?}: {e}")))
    }

    fn exchange<Q: Serialize, A: for<'de> Deserialize<'de>>(
        &self,
        request: &Q,
    ) -> Result<A, GenerationError> {
        match &self.addr {
            BridgeAddr::Tcp(hp) => self.exchange_line(hp, request),
            BridgeAddr::Http(base) => self.exchange_http(base, request),
        }
    }

    pub fn ping(&self) -> Result<(), GenerationError> {
        let r: PingResponse = self.exchange(&PingRequest { op: "ping".into() })?;
        if r.ok {
            Ok(())
        } else {
            Err(GenerationError::Protocol("bridge answered ping with ok=false".into()))
        }
    }

    pub fn generate_text(&self, id: u64, prompt: &str) -> Result<String, GenerationError> {
        let r: GenerateResponse = self.exchange(&GenerateRequest {
            id,
            prompt: prompt.to_string(),
        })?;
        if r.id != id {
            return Err(GenerationError::Protocol(format!(
                "reply for id {} to request {id}",
                r.id
            )));
        }
        match (r.text, r.error) {
            (_, Some(e)) => Err(GenerationError::Remote(e)),
            (Some(text), None) => Ok(text),
            (None, None) => Err(GenerationError::Protocol(format!(
                "reply for id {id} has neither text nor error"
            ))),
        }
    }
}

impl Generator for BridgeClient {
    fn source(&self) -> Source {
        Source::Bridge
    }

    fn generate(&self, task: &GenerationTask) -> Result<String, GenerationError> {
        self.generate_text(task.uid, &task.prompt)
    }
}
