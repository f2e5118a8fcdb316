//! Chat message and accounting types shared by every agent.
//!
//! Provider differences (tool-call encodings, usage fields) are normalized at
//! the gateway boundary; agents only ever see these shapes.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

/// One tool invocation requested by an assistant turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub arguments: serde_json::Value,
}

impl ToolCall {
    pub fn new(id: impl Into<String>, name: impl Into<String>, arguments: serde_json::Value) -> Self {
        ToolCall { id: id.into(), name: name.into(), arguments }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
    /// Assistant turns may carry several calls; providers batch them.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
    /// Set on tool-role messages: the call this message answers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message { role: Role::System, content: content.into(), tool_calls: Vec::new(), tool_call_id: None }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message { role: Role::User, content: content.into(), tool_calls: Vec::new(), tool_call_id: None }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message { role: Role::Assistant, content: content.into(), tool_calls: Vec::new(), tool_call_id: None }
    }

    pub fn assistant_with_calls(content: impl Into<String>, tool_calls: Vec<ToolCall>) -> Self {
        Message { role: Role::Assistant, content: content.into(), tool_calls, tool_call_id: None }
    }

    pub fn tool(call_id: impl Into<String>, content: impl Into<String>) -> Self {
        Message {
            role: Role::Tool,
            content: content.into(),
            tool_calls: Vec::new(),
            tool_call_id: Some(call_id.into()),
        }
    }

    /// Invariants: tool messages carry a call id, only assistant messages carry calls.
    pub fn validate(&self) -> Result<(), String> {
        if self.role == Role::Tool && self.tool_call_id.is_none() {
            return Err("tool message missing tool_call_id".into());
        }
        if self.role != Role::Assistant && !self.tool_calls.is_empty() {
            return Err(format!("{:?} message carries tool_calls", self.role));
        }
        Ok(())
    }
}

/// JSON-schema description of a tool, passed through to the provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSchema {
    pub name: String,
    pub description: String,
    pub parameters: serde_json::Value,
}

impl ToolSchema {
    pub fn new(name: impl Into<String>, description: impl Into<String>, parameters: serde_json::Value) -> Self {
        ToolSchema { name: name.into(), description: description.into(), parameters }
    }
}

/// Per-token USD prices. Worst-case accounting: no provider-side caching discounts.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pricing {
    pub input_per_token: f64,
    pub output_per_token: f64,
}

impl Pricing {
    pub fn cost(&self, input_tokens: u64, output_tokens: u64) -> f64 {
        input_tokens as f64 * self.input_per_token + output_tokens as f64 * self.output_per_token
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub model_id: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    #[serde(default)]
    pub pricing: Pricing,
}

impl ModelConfig {
    pub fn new(model_id: impl Into<String>, temperature: f64) -> Self {
        ModelConfig {
            model_id: model_id.into(),
            temperature,
            max_output_tokens: 8000,
            pricing: Pricing::default(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !self.temperature.is_finite() || self.temperature < 0.0 || self.temperature > 2.0 {
            return Err(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if self.max_output_tokens == 0 {
            return Err("max_output_tokens must be positive".into());
        }
        if self.pricing.input_per_token < 0.0 || self.pricing.output_per_token < 0.0 {
            return Err("pricing entries must be non-negative".into());
        }
        if self.model_id.is_empty() {
            return Err("model_id must be non-empty".into());
        }
        Ok(())
    }
}

/// Token and cost accounting for one completed turn.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub cost_usd: f64,
}

impl Usage {
    pub fn total_tokens(&self) -> u64 {
        self.input_tokens + self.output_tokens
    }
}

impl std::ops::Add for Usage {
    type Output = Usage;
    fn add(self, rhs: Usage) -> Usage {
        Usage {
            input_tokens: self.input_tokens + rhs.input_tokens,
            output_tokens: self.output_tokens + rhs.output_tokens,
            cost_usd: self.cost_usd + rhs.cost_usd,
        }
    }
}

impl std::ops::AddAssign for Usage {
    fn add_assign(&mut self, rhs: Usage) {
        *self = *self + rhs;
    }
}

/// A usage record tagged with the model that produced it, for batch re-pricing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageEntry {
    pub model_id: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn message_invariants() {
        assert!(Message::tool("c1", "ok").validate().is_ok());
        let mut bad = Message::tool("c1", "ok");
        bad.tool_call_id = None;
        assert!(bad.validate().is_err());
        let mut user = Message::user("hi");
        user.tool_calls.push(ToolCall::new("x", "t", serde_json::json!({})));
        assert!(user.validate().is_err());
    }

    #[test]
    fn model_config_bounds() {
        let mut cfg = ModelConfig::new("m", 0.0);
        assert!(cfg.validate().is_ok());
        cfg.temperature = 2.5;
        assert!(cfg.validate().is_err());
        cfg.temperature = f64::NAN;
        assert!(cfg.validate().is_err());
        cfg.temperature = 1.0;
        cfg.pricing.input_per_token = -0.1;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn usage_addition() {
        let a = Usage { input_tokens: 10, output_tokens: 5, cost_usd: 0.5 };
        let b = Usage { input_tokens: 1, output_tokens: 2, cost_usd: 0.25 };
        let c = a + b;
        assert_eq!(c.input_tokens, 11);
        assert_eq!(c.output_tokens, 7);
        assert!((c.cost_usd - 0.75).abs() < 1e-12);
    }
}
