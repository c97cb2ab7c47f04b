//! The provider trait and the gateway that wraps any provider with retry,
//! token accounting, and usage estimation.

use std::sync::Arc;
use std::time::Duration;

use super::{
    estimate_tokens, ChatRequest, ChatResponse, GatewayError, TokenUsage, UsageLedger,
};

/// What a backend returns before the gateway normalizes it. `usage` is absent
/// when the backend does not report token counts.
#[derive(Debug, Clone, PartialEq)]
pub struct ProviderReply {
    pub content: String,
    pub usage: Option<TokenUsage>,
}

/// A chat-completion backend. Implementations must be safe for concurrent
/// calls and must never mutate the request.
pub trait ChatProvider: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ProviderReply, GatewayError>;
}

/// Retries apply only to transport-level failures; replies are never silently
/// re-sampled for any other error class.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_millis(200),
        }
    }
}

/// Per-role call parameters, fixed by configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct CallSettings {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for CallSettings {
    fn default() -> Self {
        Self {
            model: "scripted".to_string(),
            temperature: 0.0,
            max_tokens: 1024,
        }
    }
}

/// Uniform entry point: validates the request, calls the provider with
/// bounded retries, fills in estimated usage when the backend omits it, and
/// records every completed call in the ledger under the request's tags.
pub struct Gateway {
    provider: Arc<dyn ChatProvider>,
    ledger: Arc<UsageLedger>,
    retry: RetryPolicy,
}

impl Gateway {
    pub fn new(provider: Arc<dyn ChatProvider>, ledger: Arc<UsageLedger>) -> Self {
        Self {
            provider,
            ledger,
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn ledger(&self) -> &Arc<UsageLedger> {
        &self.ledger
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.validate()?;

        let mut attempt = 0u32;
        let reply = loop {
            match self.provider.complete(request) {
                Ok(reply) => break reply,
                Err(GatewayError::Transport { message, .. }) => {
                    attempt += 1;
                    if attempt > self.retry.max_retries {
                        return Err(GatewayError::Transport {
                            attempts: attempt,
                            message,
                        });
                    }
                    let delay = self.retry.base_delay * 2u32.saturating_pow(attempt - 1);
                    std::thread::sleep(delay);
                }
                Err(other) => return Err(other),
            }
        };

        let (usage, estimated) = match reply.usage {
            Some(usage) => (usage, false),
            None => (
                TokenUsage::new(
                    estimate_tokens(&request.prompt_text()),
                    estimate_tokens(&reply.content),
                ),
                true,
            ),
        };
        self.ledger.append(request.tags.clone(), usage, estimated);
        Ok(ChatResponse {
            content: reply.content,
            usage,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ChatMessage, Purpose, RequestTags};
    use std::sync::atomic::{AtomicU32, Ordering};

    fn request(purpose: Purpose) -> ChatRequest {
        ChatRequest {
            model: "m".to_string(),
            messages: vec![ChatMessage::user("hello")],
            temperature: 0.0,
            max_tokens: 64,
            tags: RequestTags::new(purpose, "a", "c"),
        }
    }

    struct FixedProvider {
        usage: Option<TokenUsage>,
    }

    impl ChatProvider for FixedProvider {
        fn complete(&self, _request: &ChatRequest) -> Result<ProviderReply, GatewayError> {
            Ok(ProviderReply {
                content: "reply text".to_string(),
                usage: self.usage,
            })
        }
    }

    struct FlakyProvider {
        failures: AtomicU32,
    }

    impl ChatProvider for FlakyProvider {
        fn complete(&self, _request: &ChatRequest) -> Result<ProviderReply, GatewayError> {
            if self.failures.fetch_sub(1, Ordering::SeqCst) > 0 {
                Err(GatewayError::Transport {
                    attempts: 1,
                    message: "connection reset".to_string(),
                })
            } else {
                Ok(ProviderReply {
                    content: "ok".to_string(),
                    usage: Some(TokenUsage::new(201, 33)),
                })
            }
        }
    }

    #[test]
    fn backend_usage_passes_through_to_ledger() {
        let ledger = Arc::new(UsageLedger::new());
        let gateway = Gateway::new(
            Arc::new(FixedProvider {
                usage: Some(TokenUsage::new(201, 33)),
            }),
            ledger.clone(),
        );
        let response = gateway.complete(&request(Purpose::Physician)).unwrap();
        assert_eq!(response.usage.prompt_tokens, 201);
        let entries = ledger.snapshot();
        assert_eq!(entries.len(), 1);
        assert_eq!(entries[0].usage.prompt_tokens, 201);
        assert!(!entries[0].estimated);
    }

    #[test]
    fn missing_usage_is_estimated_and_flagged() {
        let ledger = Arc::new(UsageLedger::new());
        let gateway = Gateway::new(Arc::new(FixedProvider { usage: None }), ledger.clone());
        let req = request(Purpose::Patient);
        let response = gateway.complete(&req).unwrap();
        assert_eq!(
            response.usage.prompt_tokens,
            estimate_tokens(&req.prompt_text())
        );
        assert!(ledger.snapshot()[0].estimated);
    }

    #[test]
    fn transport_errors_are_retried_with_bound() {
        let provider = Arc::new(FlakyProvider {
            failures: AtomicU32::new(2),
        });
        let gateway = Gateway::new(provider, Arc::new(UsageLedger::new())).with_retry(RetryPolicy {
            max_retries: 3,
            base_delay: Duration::from_millis(1),
        });
        let response = gateway.complete(&request(Purpose::Judge)).unwrap();
        assert_eq!(response.content, "ok");
    }

    #[test]
    fn persistent_transport_failure_gives_up() {
        let provider = Arc::new(FlakyProvider {
            failures: AtomicU32::new(100),
        });
        let gateway = Gateway::new(provider, Arc::new(UsageLedger::new())).with_retry(RetryPolicy {
            max_retries: 2,
            base_delay: Duration::from_millis(1),
        });
        match gateway.complete(&request(Purpose::Judge)) {
            Err(GatewayError::Transport { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("expected transport error, got {other:?}"),
        }
    }

    #[test]
    fn complete_does_not_mutate_request() {
        let ledger = Arc::new(UsageLedger::new());
        let gateway = Gateway::new(
            Arc::new(FixedProvider {
                usage: Some(TokenUsage::new(1, 1)),
            }),
            ledger,
        );
        let req = request(Purpose::Synth);
        let before = req.clone();
        gateway.complete(&req).unwrap();
        assert_eq!(req, before);
    }
}
