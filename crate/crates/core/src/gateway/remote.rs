//! Remote backend speaking the de-facto chat-completions HTTP protocol:
//! `POST {base_url}/chat/completions` with a JSON body, bearer-token auth
//! from an environment variable.
//!
//! Request body fields: `model`, `messages` (list of `{role, content}`),
//! `temperature`, `max_tokens`. Response fields read back:
//! `choices[0].message.content` and optional `usage.prompt_tokens` /
//! `usage.completion_tokens`.

use serde::{Deserialize, Serialize};

use super::{ChatProvider, ChatRequest, GatewayError, ProviderReply, TokenUsage};

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage>,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Serialize, Deserialize)]
struct WireMessage {
    role: String,
    content: String,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

/// Maps a request onto the wire body.
pub fn wire_request_body(request: &ChatRequest) -> serde_json::Value {
    let wire = WireRequest {
        model: &request.model,
        messages: request
            .messages
            .iter()
            .map(|m| WireMessage {
                role: m.role.as_str().to_string(),
                content: m.content.clone(),
            })
            .collect(),
        temperature: request.temperature,
        max_tokens: request.max_tokens,
    };
    serde_json::to_value(wire).expect("wire request is serializable")
}

/// Maps a wire reply body back onto a provider reply.
pub fn parse_wire_response(body: &str) -> Result<ProviderReply, GatewayError> {
    let parsed: WireResponse = serde_json::from_str(body)
        .map_err(|e| GatewayError::Protocol(format!("malformed backend reply: {e}")))?;
    let choice = parsed
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| GatewayError::Protocol("backend reply has no choices".to_string()))?;
    Ok(ProviderReply {
        content: choice.message.content,
        usage: parsed.usage.map(|u| TokenUsage {
            prompt_tokens: u.prompt_tokens,
            completion_tokens: u.completion_tokens,
        }),
    })
}

pub struct RemoteProvider {
    base_url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl RemoteProvider {
    /// `api_key_env` names the environment variable holding the bearer token;
    /// the key itself never appears in configuration or flags.
    pub fn new(base_url: impl Into<String>, api_key_env: &str) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: std::env::var(api_key_env).ok(),
            agent,
        }
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url)
    }
}

impl ChatProvider for RemoteProvider {
    fn complete(&self, request: &ChatRequest) -> Result<ProviderReply, GatewayError> {
        let body = wire_request_body(request);
        let mut http = self.agent.post(&self.endpoint());
        if let Some(key) = &self.api_key {
            http = http.header("authorization", &format!("Bearer {key}"));
        }
        let mut response = http.send_json(&body).map_err(|e| GatewayError::Transport {
            attempts: 1,
            message: e.to_string(),
        })?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| GatewayError::Transport {
                attempts: 1,
                message: format!("reading response body: {e}"),
            })?;
        match status {
            200..=299 => parse_wire_response(&text),
            // Overload and server-side failures are retryable at the gateway.
            408 | 429 | 500..=599 => Err(GatewayError::Transport {
                attempts: 1,
                message: format!("backend status {status}: {text}"),
            }),
            _ => Err(GatewayError::Protocol(format!(
                "backend status {status}: {text}"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ChatMessage, Purpose, RequestTags};
    use std::io::{Read, Write};
    use std::net::TcpListener;

    fn request() -> ChatRequest {
        ChatRequest {
            model: "agent-model".to_string(),
            messages: vec![
                ChatMessage::system("you are a physician"),
                ChatMessage::user("what next?"),
            ],
            temperature: 0.2,
            max_tokens: 256,
            tags: RequestTags::new(Purpose::Physician, "doc-1", "C-1"),
        }
    }

    #[test]
    fn request_body_maps_all_fields() {
        let body = wire_request_body(&request());
        assert_eq!(body["model"], "agent-model");
        assert_eq!(body["temperature"], 0.2);
        assert_eq!(body["max_tokens"], 256);
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"], "what next?");
        // Tags are local bookkeeping, never sent over the wire.
        assert!(body.get("tags").is_none());
    }

    #[test]
    fn response_parsing_reads_content_and_usage() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"ACTION: PERCEIVE"}}],"usage":{"prompt_tokens":201,"completion_tokens":33}}"#;
        let reply = parse_wire_response(body).unwrap();
        assert_eq!(reply.content, "ACTION: PERCEIVE");
        assert_eq!(reply.usage, Some(TokenUsage::new(201, 33)));
    }

    #[test]
    fn response_without_usage_parses_with_none() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"ok"}}]}"#;
        let reply = parse_wire_response(body).unwrap();
        assert_eq!(reply.usage, None);
    }

    #[test]
    fn malformed_or_empty_replies_are_protocol_errors() {
        assert!(matches!(
            parse_wire_response("{"),
            Err(GatewayError::Protocol(_))
        ));
        assert!(matches!(
            parse_wire_response(r#"{"choices":[]}"#),
            Err(GatewayError::Protocol(_))
        ));
    }

    /// Minimal one-shot HTTP server so the full client path is exercised
    /// without any network dependency.
    fn serve_once(response_body: &'static str, status: &'static str) -> (String, std::thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buf = [0u8; 65536];
            let mut received = Vec::new();
            loop {
                let n = stream.read(&mut buf).unwrap();
                if n == 0 {
                    break;
                }
                received.extend_from_slice(&buf[..n]);
                let text = String::from_utf8_lossy(&received);
                if let Some(header_end) = text.find("\r\n\r\n") {
                    let headers = text[..header_end].to_ascii_lowercase();
                    if headers.contains("transfer-encoding: chunked") {
                        if text[header_end..].contains("0\r\n\r\n") {
                            break;
                        }
                        continue;
                    }
                    let content_length = headers
                        .lines()
                        .find_map(|l| {
                            l.strip_prefix("content-length:")
                                .map(|v| v.trim().parse::<usize>().unwrap())
                        })
                        .unwrap_or(0);
                    if received.len() >= header_end + 4 + content_length {
                        break;
                    }
                }
            }
            let reply = format!(
                "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{response_body}",
                response_body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
            String::from_utf8_lossy(&received).to_string()
        });
        (format!("http://{addr}"), handle)
    }

    #[test]
    fn http_round_trip_against_local_server() {
        let (url, handle) = serve_once(
            r#"{"choices":[{"message":{"role":"assistant","content":"hello"}}],"usage":{"prompt_tokens":7,"completion_tokens":2}}"#,
            "200 OK",
        );
        std::env::set_var("TEST_HOSPITAL_KEY", "secret-token");
        let provider = RemoteProvider::new(url, "TEST_HOSPITAL_KEY");
        let reply = provider.complete(&request()).unwrap();
        assert_eq!(reply.content, "hello");
        assert_eq!(reply.usage, Some(TokenUsage::new(7, 2)));

        let received = handle.join().unwrap();
        assert!(received.starts_with("POST /chat/completions"));
        assert!(received.contains("Bearer secret-token"));
        let body_start = received.find("\r\n\r\n").unwrap() + 4;
        let sent: serde_json::Value = serde_json::from_str(&received[body_start..]).unwrap();
        assert_eq!(sent["model"], "agent-model");
        assert_eq!(sent["messages"][1]["content"], "what next?");
    }

    #[test]
    fn server_error_maps_to_transport() {
        let (url, handle) = serve_once("overloaded", "503 Service Unavailable");
        let provider = RemoteProvider::new(url, "UNSET_VARIABLE_XYZ");
        let err = provider.complete(&request());
        assert!(matches!(err, Err(GatewayError::Transport { .. })));
        handle.join().unwrap();
    }
}
