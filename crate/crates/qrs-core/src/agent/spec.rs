//! Agent definitions and structured system-prompt assembly.
//!
//! Every agent prompt is markdown with a declarative Role, Goal, Tools and
//! Strategy section (Examples optional), an optional knowledge schema, and an
//! optional steering preprompt injected after the strategy.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{Message, ToolSchema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgentName {
    Q,
    R,
    S,
}

impl AgentName {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentName::Q => "Q",
            AgentName::R => "R",
            AgentName::S => "S",
        }
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("agent spec missing mandatory prompt section '{0}'")]
    MissingSection(&'static str),
    #[error("max_iterations must be at least 1")]
    ZeroBudget,
    #[error("duplicate tool call id '{0}' in one assistant batch")]
    DuplicateToolCallId(String),
    #[error(transparent)]
    Gateway(#[from] crate::llm::GatewayError),
    #[error("transcript log error: {0}")]
    Transcript(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSection {
    pub title: String,
    pub body: String,
}

impl PromptSection {
    pub fn new(title: impl Into<String>, body: impl Into<String>) -> Self {
        PromptSection { title: title.into(), body: body.into() }
    }
}

pub const MANDATORY_SECTIONS: [&str; 4] = ["Role", "Goal", "Tools", "Strategy"];

/// Placeholder substituted with the iteration budget when the prompt renders.
pub const BUDGET_PLACEHOLDER: &str = "{max_iterations}";

#[derive(Debug, Clone)]
pub struct AgentSpec {
    pub name: AgentName,
    /// Ordered prompt sections; must include Role, Goal, Tools, Strategy.
    pub sections: Vec<PromptSection>,
    /// Sparse schema definition appended verbatim at the end of the prompt.
    pub knowledge: Option<String>,
    /// Natural-language steering text injected verbatim after Strategy.
    pub preprompt: Option<String>,
    pub tools: Vec<ToolSchema>,
    pub max_iterations: u32,
}

impl AgentSpec {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.max_iterations == 0 {
            return Err(AgentError::ZeroBudget);
        }
        for required in MANDATORY_SECTIONS {
            if !self.sections.iter().any(|s| s.title.eq_ignore_ascii_case(required)) {
                return Err(AgentError::MissingSection(required));
            }
        }
        Ok(())
    }

    pub fn tool_names(&self) -> Vec<&str> {
        self.tools.iter().map(|t| t.name.as_str()).collect()
    }
}

/// Render the structured system prompt for an agent.
///
/// Sections concatenate in declared order; the steering preprompt slots in
/// right after Strategy; the knowledge schema goes last. Every occurrence of
/// `{max_iterations}` is replaced with the literal budget.
pub fn assemble_system_prompt(spec: &AgentSpec) -> Result<Message, AgentError> {
    spec.validate()?;
    let mut parts: Vec<String> = Vec::new();
    for section in &spec.sections {
        parts.push(format!("## {}\n{}", section.title, section.body));
        if section.title.eq_ignore_ascii_case("Strategy") {
            if let Some(steering) = &spec.preprompt {
                parts.push(format!("## Steering\n{steering}"));
            }
        }
    }
    if let Some(knowledge) = &spec.knowledge {
        parts.push(format!("## Knowledge\n{knowledge}"));
    }
    let rendered = parts.join("\n\n").replace(BUDGET_PLACEHOLDER, &spec.max_iterations.to_string());
    Ok(Message::system(rendered))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_spec() -> AgentSpec {
        AgentSpec {
            name: AgentName::Q,
            sections: vec![
                PromptSection::new("Role", "security analyst"),
                PromptSection::new("Goal", "find bugs"),
                PromptSection::new("Tools", "- execute_query"),
                PromptSection::new(
                    "Strategy",
                    "Iteration budget: {max_iterations} iterations total.",
                ),
                PromptSection::new("Examples", "none"),
            ],
            knowledge: None,
            preprompt: None,
            tools: vec![],
            max_iterations: 20,
        }
    }

    #[test]
    fn budget_placeholder_substituted() {
        let prompt = assemble_system_prompt(&base_spec()).unwrap();
        assert!(prompt.content.contains("Iteration budget: 20 iterations total."));
        assert!(!prompt.content.contains(BUDGET_PLACEHOLDER));
    }

    #[test]
    fn knowledge_and_preprompt_appear_verbatim() {
        let mut spec = base_spec();
        spec.knowledge = Some("Use flow nodes for calls.".into());
        spec.preprompt = Some("Focus on deserialization sinks.".into());
        let prompt = assemble_system_prompt(&spec).unwrap();
        assert!(prompt.content.contains("Use flow nodes for calls."));
        assert!(prompt.content.contains("Focus on deserialization sinks."));
        // Steering sits after Strategy and before Examples.
        let steer = prompt.content.find("Focus on deserialization sinks.").unwrap();
        let strategy = prompt.content.find("Iteration budget").unwrap();
        let examples = prompt.content.find("## Examples").unwrap();
        assert!(strategy < steer && steer < examples);
    }

    #[test]
    fn omitting_preprompt_only_drops_the_steering_section() {
        let mut with = base_spec();
        with.preprompt = Some("steer text".into());
        let with_prompt = assemble_system_prompt(&with).unwrap();
        let without_prompt = assemble_system_prompt(&base_spec()).unwrap();
        let stripped = with_prompt.content.replace("\n\n## Steering\nsteer text", "");
        assert_eq!(stripped, without_prompt.content);
    }

    #[test]
    fn missing_mandatory_section_is_a_configuration_error() {
        let mut spec = base_spec();
        spec.sections.retain(|s| s.title != "Goal");
        assert!(matches!(assemble_system_prompt(&spec), Err(AgentError::MissingSection("Goal"))));
    }
}
