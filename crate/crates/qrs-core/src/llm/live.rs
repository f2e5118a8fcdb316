//! Live transport speaking the OpenAI-compatible chat-completions wire format,
//! which every supported provider family exposes directly or via a proxy.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::gateway::{BackendResponse, ChatBackend, GatewayError};
use super::types::{Message, ModelConfig, Role, ToolCall, ToolSchema};

pub struct LiveBackend {
    client: reqwest::blocking::Client,
    base_url: String,
    api_key: String,
}

impl LiveBackend {
    /// `base_url` is the provider root, e.g. `https://api.openai.com/v1`.
    /// The API key is read from `api_key_env` at construction time.
    pub fn from_env(base_url: impl Into<String>, api_key_env: &str) -> Result<Self, GatewayError> {
        let api_key = std::env::var(api_key_env).map_err(|_| {
            GatewayError::InvalidRequest(format!("credential variable {api_key_env} is not set"))
        })?;
        Ok(LiveBackend {
            client: reqwest::blocking::Client::new(),
            base_url: base_url.into(),
            api_key,
        })
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    temperature: f64,
    max_tokens: u32,
    messages: Vec<WireMessage>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    tools: Vec<WireTool<'a>>,
}

#[derive(Serialize, Deserialize)]
struct WireMessage {
    role: String,
    #[serde(default)]
    content: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tool_calls: Option<Vec<WireToolCall>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tool_call_id: Option<String>,
}

#[derive(Serialize)]
struct WireTool<'a> {
    r#type: &'static str,
    function: WireFunction<'a>,
}

#[derive(Serialize)]
struct WireFunction<'a> {
    name: &'a str,
    description: &'a str,
    parameters: &'a Value,
}

#[derive(Serialize, Deserialize)]
struct WireToolCall {
    id: String,
    #[serde(default)]
    r#type: Option<String>,
    function: WireCallFunction,
}

#[derive(Serialize, Deserialize)]
struct WireCallFunction {
    name: String,
    /// JSON-encoded argument object, per the wire format.
    arguments: String,
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
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

fn encode_message(msg: &Message) -> WireMessage {
    let role = match msg.role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
        Role::Tool => "tool",
    };
    let tool_calls = if msg.tool_calls.is_empty() {
        None
    } else {
        Some(
            msg.tool_calls
                .iter()
                .map(|c| WireToolCall {
                    id: c.id.clone(),
                    r#type: Some("function".into()),
                    function: WireCallFunction {
                        name: c.name.clone(),
                        arguments: c.arguments.to_string(),
                    },
                })
                .collect(),
        )
    };
    WireMessage {
        role: role.to_string(),
        content: Some(msg.content.clone()),
        tool_calls,
        tool_call_id: msg.tool_call_id.clone(),
    }
}

fn decode_message(wire: WireMessage) -> Result<Message, GatewayError> {
    let mut tool_calls = Vec::new();
    for call in wire.tool_calls.unwrap_or_default() {
        let arguments: Value = serde_json::from_str(&call.function.arguments)
            .map_err(|e| GatewayError::Malformed(format!("tool call arguments are not JSON: {e}")))?;
        tool_calls.push(ToolCall::new(call.id, call.function.name, arguments));
    }
    Ok(Message {
        role: Role::Assistant,
        content: wire.content.unwrap_or_default(),
        tool_calls,
        tool_call_id: None,
    })
}

impl ChatBackend for LiveBackend {
    fn complete(
        &self,
        _session: &str,
        config: &ModelConfig,
        messages: &[Message],
        tools: &[ToolSchema],
    ) -> Result<BackendResponse, GatewayError> {
        let request = WireRequest {
            model: &config.model_id,
            temperature: config.temperature,
            max_tokens: config.max_output_tokens,
            messages: messages.iter().map(encode_message).collect(),
            tools: tools
                .iter()
                .map(|t| WireTool {
                    r#type: "function",
                    function: WireFunction {
                        name: &t.name,
                        description: &t.description,
                        parameters: &t.parameters,
                    },
                })
                .collect(),
        };

        let response = self
            .client
            .post(format!("{}/chat/completions", self.base_url.trim_end_matches('/')))
            .bearer_auth(&self.api_key)
            .json(&request)
            .send()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;

        let status = response.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(GatewayError::Transport(format!("provider returned {status}")));
        }
        if !status.is_success() {
            let body = response.text().unwrap_or_default();
            return Err(GatewayError::Malformed(format!("provider returned {status}: {body}")));
        }

        let wire: WireResponse =
            response.json().map_err(|e| GatewayError::Malformed(e.to_string()))?;
        let choice = wire
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| GatewayError::Malformed("response carries no choices".into()))?;
        let message = decode_message(choice.message)?;
        let usage = wire.usage.unwrap_or(WireUsage { prompt_tokens: 0, completion_tokens: 0 });
        Ok(BackendResponse {
            message,
            input_tokens: usage.prompt_tokens,
            output_tokens: usage.completion_tokens,
        })
    }
}
