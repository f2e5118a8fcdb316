//! Provider-agnostic chat completion gateway with bounded retries and cost accounting.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

use super::types::{Message, ModelConfig, Pricing, Role, ToolSchema, Usage, UsageEntry};

#[derive(Debug, Error)]
pub enum GatewayError {
    /// Retryable: network or provider-side transient failure.
    #[error("transport failure: {0}")]
    Transport(String),
    /// Non-retryable: provider returned something we cannot interpret.
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("replay divergence at turn {turn} of session '{session}': {detail}")]
    ReplayDivergence { session: String, turn: usize, detail: String },
    #[error("transcript archive error: {0}")]
    Archive(String),
    #[error("no pricing configured for model '{0}'")]
    UnknownModel(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

/// Raw completion as produced by a backend, before cost accounting.
#[derive(Debug, Clone)]
pub struct BackendResponse {
    pub message: Message,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

/// One chat-completion transport. `session` identifies the message stream so
/// record/replay backends can keep per-stream turn counters.
pub trait ChatBackend: Send + Sync {
    fn complete(
        &self,
        session: &str,
        config: &ModelConfig,
        messages: &[Message],
        tools: &[ToolSchema],
    ) -> Result<BackendResponse, GatewayError>;
}

/// Shared handle over a backend. Adds request validation, bounded retries
/// with exponential backoff, and usage/cost computation.
#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    max_attempts: u32,
    backoff: Duration,
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        Gateway { backend, max_attempts: 3, backoff: Duration::from_millis(250) }
    }

    /// Override the retry policy (tests use a zero backoff).
    pub fn with_retry(mut self, max_attempts: u32, backoff: Duration) -> Self {
        self.max_attempts = max_attempts.max(1);
        self.backoff = backoff;
        self
    }

    pub fn complete(
        &self,
        session: &str,
        config: &ModelConfig,
        messages: &[Message],
        tools: &[ToolSchema],
    ) -> Result<(Message, Usage), GatewayError> {
        config.validate().map_err(GatewayError::InvalidRequest)?;
        if messages.is_empty() {
            return Err(GatewayError::InvalidRequest("message stream is empty".into()));
        }
        if messages[0].role != Role::System {
            return Err(GatewayError::InvalidRequest("first message must have role system".into()));
        }

        let mut attempt = 0;
        let response = loop {
            attempt += 1;
            match self.backend.complete(session, config, messages, tools) {
                Ok(r) => break r,
                Err(GatewayError::Transport(detail)) if attempt < self.max_attempts => {
                    log::warn!(
                        "transport failure on session '{session}' (attempt {attempt}/{}): {detail}",
                        self.max_attempts
                    );
                    std::thread::sleep(self.backoff * 2u32.pow(attempt - 1));
                }
                Err(e) => return Err(e),
            }
        };

        let message = response.message;
        if message.role != Role::Assistant {
            return Err(GatewayError::Malformed(format!(
                "backend returned a {:?} message instead of an assistant turn",
                message.role
            )));
        }
        message.validate().map_err(GatewayError::Malformed)?;
        let usage = Usage {
            input_tokens: response.input_tokens,
            output_tokens: response.output_tokens,
            cost_usd: config.pricing.cost(response.input_tokens, response.output_tokens),
        };
        Ok((message, usage))
    }
}

/// Pricing lookup for batch accounting, keyed by model id.
pub type PricingTable = BTreeMap<String, Pricing>;

/// Re-price a list of tagged usage records. Linear and order-independent.
pub fn account_cost(entries: &[UsageEntry], pricing: &PricingTable) -> Result<f64, GatewayError> {
    let mut total = 0.0;
    for entry in entries {
        let price = pricing
            .get(&entry.model_id)
            .ok_or_else(|| GatewayError::UnknownModel(entry.model_id.clone()))?;
        total += price.cost(entry.input_tokens, entry.output_tokens);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    struct FlakyBackend {
        failures_left: Mutex<u32>,
    }

    impl ChatBackend for FlakyBackend {
        fn complete(
            &self,
            _session: &str,
            _config: &ModelConfig,
            _messages: &[Message],
            _tools: &[ToolSchema],
        ) -> Result<BackendResponse, GatewayError> {
            let mut left = self.failures_left.lock().unwrap();
            if *left > 0 {
                *left -= 1;
                return Err(GatewayError::Transport("connection reset".into()));
            }
            Ok(BackendResponse {
                message: Message::assistant("ok"),
                input_tokens: 100,
                output_tokens: 10,
            })
        }
    }

    fn seed() -> Vec<Message> {
        vec![Message::system("sys"), Message::user("hi")]
    }

    #[test]
    fn retries_transport_failures_then_succeeds() {
        let backend = Arc::new(FlakyBackend { failures_left: Mutex::new(2) });
        let gw = Gateway::new(backend).with_retry(3, Duration::ZERO);
        let cfg = ModelConfig::new("m", 0.0);
        let (msg, usage) = gw.complete("s", &cfg, &seed(), &[]).unwrap();
        assert_eq!(msg.content, "ok");
        assert_eq!(usage.input_tokens, 100);
    }

    #[test]
    fn gives_up_after_bounded_retries() {
        let backend = Arc::new(FlakyBackend { failures_left: Mutex::new(10) });
        let gw = Gateway::new(backend).with_retry(3, Duration::ZERO);
        let cfg = ModelConfig::new("m", 0.0);
        let err = gw.complete("s", &cfg, &seed(), &[]).unwrap_err();
        assert!(matches!(err, GatewayError::Transport(_)));
    }

    #[test]
    fn rejects_stream_not_starting_with_system() {
        let backend = Arc::new(FlakyBackend { failures_left: Mutex::new(0) });
        let gw = Gateway::new(backend);
        let cfg = ModelConfig::new("m", 0.0);
        let err = gw.complete("s", &cfg, &[Message::user("hi")], &[]).unwrap_err();
        assert!(matches!(err, GatewayError::InvalidRequest(_)));
    }

    #[test]
    fn usage_costs_follow_configured_pricing() {
        let backend = Arc::new(FlakyBackend { failures_left: Mutex::new(0) });
        let gw = Gateway::new(backend);
        let mut cfg = ModelConfig::new("m", 0.0);
        cfg.pricing = Pricing { input_per_token: 1e-6, output_per_token: 2e-6 };
        let (_, usage) = gw.complete("s", &cfg, &seed(), &[]).unwrap();
        // 100 input + 10 output tokens
        assert!((usage.cost_usd - (100.0 * 1e-6 + 10.0 * 2e-6)).abs() < 1e-15);
    }

    #[test]
    fn account_cost_sums_per_model_prices() {
        let mut table = PricingTable::new();
        table.insert("a".into(), Pricing { input_per_token: 1e-6, output_per_token: 0.0 });
        let entries = vec![UsageEntry { model_id: "a".into(), input_tokens: 1_000_000, output_tokens: 0 }];
        assert!((account_cost(&entries, &table).unwrap() - 1.0).abs() < 1e-12);
        assert!((account_cost(&[], &table).unwrap()).abs() < f64::EPSILON);

        let unknown = vec![UsageEntry { model_id: "b".into(), input_tokens: 1, output_tokens: 0 }];
        assert!(matches!(account_cost(&unknown, &table), Err(GatewayError::UnknownModel(_))));
    }
}
