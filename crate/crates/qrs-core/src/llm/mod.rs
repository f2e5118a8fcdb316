//! Provider-agnostic chat completion with tool calling, cost accounting, and
//! deterministic record/replay for offline runs.

pub mod gateway;
pub mod live;
pub mod recorder;
pub mod scripted;
pub mod types;

pub use gateway::{account_cost, BackendResponse, ChatBackend, Gateway, GatewayError, PricingTable};
pub use live::LiveBackend;
pub use recorder::{request_digest, RecordBackend, ReplayBackend};
pub use scripted::ScriptedBackend;
pub use types::{Message, ModelConfig, Pricing, Role, ToolCall, ToolSchema, Usage, UsageEntry};
