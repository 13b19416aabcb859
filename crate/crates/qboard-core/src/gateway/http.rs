//! Live HTTP backend for OpenAI-compatible completion and embedding APIs.
//!
//! Transport failures and 5xx responses retry with bounded exponential
//! backoff; 4xx responses surface immediately with a body excerpt. Echo
//! scoring sends `prompt + target` with `echo: true` and `max_tokens: 0`,
//! then keeps only the logprobs of the target's tokens.

use std::time::Duration;

use serde_json::{json, Value};

use super::{Backend, Completion, CompletionRequest, EmbeddingVector, GatewayError, TokenLogprob, Usage};

#[derive(Debug, Clone)]
pub struct HttpConfig {
    /// Base URL, e.g. `https://api.openai.com`.
    pub base_url: String,
    pub api_key: Option<String>,
    pub model_id: String,
    pub embed_model_id: String,
    pub completions_path: String,
    pub embeddings_path: String,
    pub timeout_secs: u64,
    /// Retries after the first attempt; total attempts = max_retries + 1.
    pub max_retries: u32,
    pub backoff_ms: u64,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>, model_id: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            api_key: None,
            model_id: model_id.into(),
            embed_model_id: "text-embedding-3-small".to_string(),
            completions_path: "/v1/completions".to_string(),
            embeddings_path: "/v1/embeddings".to_string(),
            timeout_secs: 120,
            max_retries: 3,
            backoff_ms: 200,
        }
    }

    pub fn with_api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(key.into());
        self
    }

    pub fn with_embed_model(mut self, model: impl Into<String>) -> Self {
        self.embed_model_id = model.into();
        self
    }

    pub fn with_retry(mut self, max_retries: u32, backoff_ms: u64) -> Self {
        self.max_retries = max_retries;
        self.backoff_ms = backoff_ms;
        self
    }
}

pub struct HttpBackend {
    agent: ureq::Agent,
    config: HttpConfig,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Self {
        let agent_config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build();
        Self {
            agent: agent_config.into(),
            config,
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.config.base_url.trim_end_matches('/'), path)
    }

    fn post_json(&self, url: &str, body: &Value) -> Result<Value, GatewayError> {
        let payload = serde_json::to_string(body).expect("request bodies serialize");
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            let mut request = self
                .agent
                .post(url)
                .header("Content-Type", "application/json");
            if let Some(key) = &self.config.api_key {
                request = request.header("Authorization", &format!("Bearer {key}"));
            }
            match request.send(payload.as_str()) {
                Ok(mut response) => {
                    let status = response.status().as_u16();
                    let text = response
                        .body_mut()
                        .read_to_string()
                        .map_err(|e| GatewayError::Transport {
                            attempts: attempt,
                            message: format!("reading response body: {e}"),
                        })?;
                    if (200..300).contains(&status) {
                        return serde_json::from_str(&text).map_err(|e| {
                            GatewayError::InvalidResponse {
                                message: format!("response is not JSON: {e}"),
                            }
                        });
                    }
                    if (400..500).contains(&status) {
                        return Err(GatewayError::Provider {
                            status,
                            excerpt: excerpt(&text),
                        });
                    }
                    // 5xx: retry, then surface
                    if attempt > self.config.max_retries {
                        return Err(GatewayError::Provider {
                            status,
                            excerpt: excerpt(&text),
                        });
                    }
                }
                Err(e) => {
                    if attempt > self.config.max_retries {
                        return Err(GatewayError::Transport {
                            attempts: attempt,
                            message: e.to_string(),
                        });
                    }
                }
            }
            let delay = self.config.backoff_ms.saturating_mul(1u64 << (attempt - 1));
            std::thread::sleep(Duration::from_millis(delay));
        }
    }
}

fn excerpt(text: &str) -> String {
    let trimmed = text.trim();
    if trimmed.chars().count() <= 200 {
        trimmed.to_string()
    } else {
        let cut: String = trimmed.chars().take(200).collect();
        format!("{cut}...")
    }
}

impl Backend for HttpBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, GatewayError> {
        request.validate()?;

        let echo_target = request.echo_score_target.as_deref();
        let wire_prompt = match echo_target {
            Some(target) => format!("{}{}", request.prompt, target),
            None => request.prompt.clone(),
        };
        let mut body = json!({
            "model": self.config.model_id,
            "prompt": wire_prompt,
            "temperature": request.temperature,
            "max_tokens": if echo_target.is_some() { 0 } else { request.max_tokens },
        });
        if !request.stop.is_empty() {
            body["stop"] = json!(request.stop);
        }
        if request.want_logprobs {
            body["logprobs"] = json!(0);
        }
        if echo_target.is_some() {
            body["echo"] = json!(true);
        }

        let value = self.post_json(&self.url(&self.config.completions_path), &body)?;
        let choice = value
            .get("choices")
            .and_then(|c| c.get(0))
            .ok_or_else(|| GatewayError::InvalidResponse {
                message: "response has no choices".into(),
            })?;

        let mut text = choice
            .get("text")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string();
        // providers stop *at* the sequence; enforce the truncation regardless
        for stop in &request.stop {
            if let Some(idx) = text.find(stop.as_str()) {
                text.truncate(idx);
            }
        }

        let token_logprobs = if request.want_logprobs {
            Some(parse_logprobs(choice, &request.prompt, echo_target)?)
        } else {
            None
        };

        let completion = Completion {
            text: match echo_target {
                Some(target) => target.to_string(),
                None => text,
            },
            token_logprobs,
            model_id: value
                .get("model")
                .and_then(Value::as_str)
                .unwrap_or(&self.config.model_id)
                .to_string(),
            usage: parse_usage(&value),
        };
        completion.check_logprobs()?;
        Ok(completion)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        if text.trim().is_empty() {
            return Err(GatewayError::InvalidRequest {
                message: "cannot embed empty text".into(),
            });
        }
        let body = json!({
            "model": self.config.embed_model_id,
            "input": text,
        });
        let value = self.post_json(&self.url(&self.config.embeddings_path), &body)?;
        let values: Vec<f64> = value
            .get("data")
            .and_then(|d| d.get(0))
            .and_then(|d| d.get("embedding"))
            .and_then(Value::as_array)
            .map(|arr| arr.iter().filter_map(Value::as_f64).collect())
            .unwrap_or_default();
        if values.is_empty() {
            return Err(GatewayError::InvalidResponse {
                message: "embedding response carries no vector".into(),
            });
        }
        Ok(EmbeddingVector { values })
    }

    fn describe(&self) -> String {
        format!("live:{}", self.config.base_url)
    }
}

// Extract (token, logprob) pairs from a legacy-completions `logprobs` block.
// For echo scoring, only tokens at or past the original prompt's end count.
fn parse_logprobs(
    choice: &Value,
    prompt: &str,
    echo_target: Option<&str>,
) -> Result<Vec<TokenLogprob>, GatewayError> {
    let block = choice
        .get("logprobs")
        .filter(|v| !v.is_null())
        .ok_or_else(|| GatewayError::UnsupportedCapability {
            message: "provider returned no logprobs".into(),
        })?;
    let tokens = block
        .get("tokens")
        .and_then(Value::as_array)
        .ok_or_else(|| GatewayError::InvalidResponse {
            message: "logprobs block has no tokens".into(),
        })?;
    let logprobs = block
        .get("token_logprobs")
        .and_then(Value::as_array)
        .ok_or_else(|| GatewayError::InvalidResponse {
            message: "logprobs block has no token_logprobs".into(),
        })?;

    let boundary = match echo_target {
        Some(_) => {
            let offsets = block.get("text_offset").and_then(Value::as_array).ok_or_else(|| {
                GatewayError::UnsupportedCapability {
                    message: "echo scoring needs text_offset to locate the continuation".into(),
                }
            })?;
            Some((offsets, prompt.chars().count() as u64))
        }
        None => None,
    };

    let mut out = Vec::new();
    for (i, (token, lp)) in tokens.iter().zip(logprobs).enumerate() {
        if let Some((offsets, prompt_end)) = &boundary {
            let offset = offsets
                .get(i)
                .and_then(Value::as_u64)
                .unwrap_or(u64::MAX);
            if offset < *prompt_end {
                continue;
            }
        }
        let token = token.as_str().unwrap_or_default().to_string();
        let logprob = lp.as_f64().ok_or_else(|| GatewayError::InvalidResponse {
            message: format!("token {token:?} in the scored span has a null logprob"),
        })?;
        out.push(TokenLogprob { token, logprob });
    }
    if out.is_empty() {
        return Err(GatewayError::InvalidResponse {
            message: "no logprobs cover the scored span".into(),
        });
    }
    Ok(out)
}

fn parse_usage(value: &Value) -> Usage {
    let read = |key: &str| {
        value
            .get("usage")
            .and_then(|u| u.get(key))
            .and_then(Value::as_u64)
            .unwrap_or(0) as u32
    };
    Usage {
        prompt_tokens: read("prompt_tokens"),
        completion_tokens: read("completion_tokens"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;
    use std::sync::mpsc;

    // One-shot HTTP server: answers `responses` in order, captures request
    // bodies, then closes.
    fn serve(responses: Vec<(u16, String)>) -> (String, mpsc::Receiver<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut buf = [0u8; 65536];
                let mut data = Vec::new();
                loop {
                    let n = stream.read(&mut buf).unwrap();
                    data.extend_from_slice(&buf[..n]);
                    if n == 0 || data.windows(4).any(|w| w == b"\r\n\r\n") {
                        // read the declared content-length worth of body
                        let text = String::from_utf8_lossy(&data).to_string();
                        let content_length = text
                            .lines()
                            .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(|v| v.trim().parse::<usize>().unwrap()));
                        if let Some(len) = content_length {
                            let header_end = text.find("\r\n\r\n").unwrap() + 4;
                            while data.len() < header_end + len {
                                let n = stream.read(&mut buf).unwrap();
                                if n == 0 {
                                    break;
                                }
                                data.extend_from_slice(&buf[..n]);
                            }
                        }
                        break;
                    }
                }
                let text = String::from_utf8_lossy(&data).to_string();
                let body_start = text.find("\r\n\r\n").map(|i| i + 4).unwrap_or(text.len());
                tx.send(text[body_start..].to_string()).unwrap();
                let reply = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).unwrap();
            }
        });
        (format!("http://{addr}"), rx)
    }

    fn completion_body(text: &str) -> String {
        serde_json::to_string(&serde_json::json!({
            "model": "test-model",
            "choices": [{"text": text, "index": 0, "logprobs": null, "finish_reason": "stop"}],
            "usage": {"prompt_tokens": 4, "completion_tokens": 2, "total_tokens": 6}
        }))
        .unwrap()
    }

    fn backend(base: &str) -> HttpBackend {
        HttpBackend::new(HttpConfig::new(base, "test-model").with_retry(1, 1))
    }

    #[test]
    fn sends_sampling_temperature_in_the_body() {
        let (base, rx) = serve(vec![(200, completion_body(" An answer."))]);
        let request = CompletionRequest::new("Question?")
            .with_temperature(0.7)
            .with_max_tokens(256);
        let completion = backend(&base).complete(&request).unwrap();
        assert_eq!(completion.text, " An answer.");
        assert_eq!(completion.usage.prompt_tokens, 4);
        let body: serde_json::Value = serde_json::from_str(&rx.recv().unwrap()).unwrap();
        assert_eq!(body["temperature"], serde_json::json!(0.7));
        assert_eq!(body["max_tokens"], serde_json::json!(256));
        assert_eq!(body["model"], serde_json::json!("test-model"));
        assert!(body.get("echo").is_none());
    }

    #[test]
    fn client_enforces_stop_truncation() {
        let (base, _rx) = serve(vec![(200, completion_body("homework\nextra"))]);
        let request = CompletionRequest::new("p").with_stop(vec!["\n".into()]);
        let completion = backend(&base).complete(&request).unwrap();
        assert_eq!(completion.text, "homework");
    }

    #[test]
    fn four_xx_is_not_retried_and_carries_excerpt() {
        let (base, rx) = serve(vec![(401, "{\"error\": \"bad key\"}".into())]);
        let err = backend(&base)
            .complete(&CompletionRequest::new("p"))
            .unwrap_err();
        match err {
            GatewayError::Provider { status, excerpt } => {
                assert_eq!(status, 401);
                assert!(excerpt.contains("bad key"));
            }
            other => panic!("unexpected {other:?}"),
        }
        // exactly one request reached the server
        assert!(rx.recv().is_ok());
        assert!(rx.try_recv().is_err());
    }

    #[test]
    fn five_xx_retries_then_succeeds() {
        let (base, rx) = serve(vec![
            (500, "{}".into()),
            (200, completion_body("ok")),
        ]);
        let completion = backend(&base).complete(&CompletionRequest::new("p")).unwrap();
        assert_eq!(completion.text, "ok");
        assert!(rx.recv().is_ok());
        assert!(rx.recv().is_ok());
    }

    #[test]
    fn connection_failure_surfaces_as_transport_error() {
        // nothing listens on this port
        let backend = HttpBackend::new(HttpConfig::new("http://127.0.0.1:1", "m").with_retry(1, 1));
        let err = backend.complete(&CompletionRequest::new("p")).unwrap_err();
        assert!(matches!(err, GatewayError::Transport { attempts: 2, .. }));
    }

    #[test]
    fn echo_scoring_selects_continuation_tokens() {
        // prompt is 6 chars; tokens at offsets 0 and 3 belong to it, tokens at
        // 6 and 8 are the scored continuation
        let body = serde_json::to_string(&serde_json::json!({
            "model": "test-model",
            "choices": [{
                "text": "promptyes!",
                "index": 0,
                "logprobs": {
                    "tokens": ["pro", "mpt", "ye", "s!"],
                    "token_logprobs": [null, -0.9, -0.1, -0.2],
                    "text_offset": [0, 3, 6, 8]
                },
                "finish_reason": "stop"
            }],
            "usage": {"prompt_tokens": 4, "completion_tokens": 0, "total_tokens": 4}
        }))
        .unwrap();
        let (base, rx) = serve(vec![(200, body)]);
        let request = CompletionRequest::new("prompt").echo_scoring("yes!");
        let completion = backend(&base).complete(&request).unwrap();
        assert_eq!(completion.text, "yes!");
        let logprobs = completion.token_logprobs.unwrap();
        assert_eq!(logprobs.len(), 2);
        assert!((logprobs[0].logprob + 0.1).abs() < 1e-12);
        assert!((logprobs[1].logprob + 0.2).abs() < 1e-12);

        let sent: serde_json::Value = serde_json::from_str(&rx.recv().unwrap()).unwrap();
        assert_eq!(sent["prompt"], serde_json::json!("promptyes!"));
        assert_eq!(sent["echo"], serde_json::json!(true));
        assert_eq!(sent["max_tokens"], serde_json::json!(0));
        assert_eq!(sent["logprobs"], serde_json::json!(0));
    }

    #[test]
    fn missing_logprobs_reports_unsupported_capability() {
        let (base, _rx) = serve(vec![(200, completion_body("text"))]);
        let request = CompletionRequest::new("p").with_logprobs();
        let err = backend(&base).complete(&request).unwrap_err();
        assert!(matches!(err, GatewayError::UnsupportedCapability { .. }));
    }

    #[test]
    fn embeddings_round_trip() {
        let body = serde_json::to_string(&serde_json::json!({
            "data": [{"embedding": [0.6, 0.8], "index": 0}],
            "model": "embed-model"
        }))
        .unwrap();
        let (base, rx) = serve(vec![(200, body)]);
        let vector = backend(&base).embed("hello").unwrap();
        assert_eq!(vector.values, vec![0.6, 0.8]);
        let sent: serde_json::Value = serde_json::from_str(&rx.recv().unwrap()).unwrap();
        assert_eq!(sent["input"], serde_json::json!("hello"));
    }
}
