use std::thread;
use std::time::Duration;

use log::debug;
use serde::Serialize;

use super::{Generator, GeneratorError, GeneratorRequest, GeneratorResponse, SegmentContext};

#[derive(Serialize)]
struct WireRequest<'a> {
    text: &'a str,
    max_tokens: usize,
}

/// HTTP client for a generation server: POSTs `{"text", "max_tokens"}` and
/// expects `{"text"}` back. Network errors, timeouts and 5xx responses are
/// retried with exponential backoff.
#[derive(Debug, Clone)]
pub struct RemoteGenerator {
    endpoint: String,
    client: reqwest::blocking::Client,
    attempts: u32,
    backoff: Duration,
}

impl RemoteGenerator {
    pub const DEFAULT_ATTEMPTS: u32 = 3;

    pub fn new(endpoint: impl Into<String>) -> Result<Self, GeneratorError> {
        RemoteGenerator::with_timeout(endpoint, Duration::from_secs(60))
    }

    pub fn with_timeout(endpoint: impl Into<String>, timeout: Duration) -> Result<Self, GeneratorError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GeneratorError::Transport(e.to_string()))?;
        Ok(RemoteGenerator {
            endpoint: endpoint.into(),
            client,
            attempts: Self::DEFAULT_ATTEMPTS,
            backoff: Duration::from_millis(250),
        })
    }

    /// Delay before the first retry; doubled for each later one.
    pub fn backoff(mut self, base: Duration) -> Self {
        self.backoff = base;
        self
    }

    pub fn attempts(mut self, attempts: u32) -> Self {
        self.attempts = attempts.max(1);
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn attempt(&self, request: &GeneratorRequest) -> Result<GeneratorResponse, (GeneratorError, bool)> {
        let body = WireRequest {
            text: &request.highlighted_text,
            max_tokens: request.max_tokens,
        };
        let response = self.client.post(&self.endpoint).json(&body).send().map_err(|e| {
            if e.is_timeout() {
                (GeneratorError::Timeout { attempts: 0 }, true)
            } else {
                (GeneratorError::Transport(e.to_string()), true)
            }
        })?;
        let status = response.status();
        if !status.is_success() {
            return Err((
                GeneratorError::Status {
                    status: status.as_u16(),
                },
                status.is_server_error(),
            ));
        }
        let text = response.text().map_err(|e| {
            let retry = e.is_timeout();
            (GeneratorError::Transport(e.to_string()), retry)
        })?;
        parse_response(&text).map_err(|e| (e, false))
    }
}

fn parse_response(body: &str) -> Result<GeneratorResponse, GeneratorError> {
    let value: serde_json::Value =
        serde_json::from_str(body).map_err(|e| GeneratorError::Protocol(format!("invalid JSON: {e}")))?;
    match value.get("text") {
        Some(serde_json::Value::String(text)) => Ok(GeneratorResponse { text: text.clone() }),
        Some(_) => Err(GeneratorError::Protocol("\"text\" is not a string".into())),
        None => Err(GeneratorError::Protocol("missing \"text\" field".into())),
    }
}

impl Generator for RemoteGenerator {
    fn generate(
        &self,
        request: &GeneratorRequest,
        _context: &SegmentContext<'_>,
    ) -> Result<GeneratorResponse, GeneratorError> {
        let mut delay = self.backoff;
        let mut attempt = 1;
        loop {
            match self.attempt(request) {
                Ok(response) => return Ok(response),
                Err((err, retry)) => {
                    debug!("{} attempt {attempt}: {err}", self.endpoint);
                    if !retry || attempt >= self.attempts {
                        return Err(match err {
                            GeneratorError::Timeout { .. } => GeneratorError::Timeout { attempts: attempt },
                            other => other,
                        });
                    }
                }
            }
            thread::sleep(delay);
            delay *= 2;
            attempt += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn response_schema() {
        assert_eq!(parse_response(r#"{"text": "a TL;DR b"}"#).unwrap().text, "a TL;DR b");
        assert!(matches!(
            parse_response(r#"{"summary": "x"}"#),
            Err(GeneratorError::Protocol(_))
        ));
        assert!(matches!(
            parse_response(r#"{"text": 3}"#),
            Err(GeneratorError::Protocol(_))
        ));
        assert!(matches!(parse_response("not json"), Err(GeneratorError::Protocol(_))));
    }

    #[test]
    fn wire_request_shape() {
        let v = serde_json::to_value(WireRequest {
            text: "<hl> A: hi <hl>",
            max_tokens: 32,
        })
        .unwrap();
        assert_eq!(v, serde_json::json!({"text": "<hl> A: hi <hl>", "max_tokens": 32}));
    }
}
