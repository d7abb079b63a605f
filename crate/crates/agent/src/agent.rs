//! Thought/action/observation loop.

use std::sync::Arc;

use isoscope_core::clock::SharedClock;
use isoscope_llm::{Gateway, Role};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::parse::{parse_completion, Parsed};
use crate::session::{AgentStep, AgentTurn, Session};
use crate::tool::{normalize_input, Services, ToolEnv, ToolRegistry};
use crate::AgentError;

pub const DEFAULT_MAX_STEPS: usize = 8;
pub const DEFAULT_MEMORY_WINDOW: usize = 10;
pub const STEP_LIMIT_MARKER: &str = "Step limit reached";

const REPROMPT: &str = "\n\nYour previous reply could not be parsed. Reply with a Thought line followed by either \
an Action line and an Action Input line, or a Final Answer line.\nThought:";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentConfig {
    pub max_steps: usize,
    pub memory_window: usize,
    pub suggest_followups: bool,
    /// Add each answered turn to the retrieval store.
    pub index_turns: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            max_steps: DEFAULT_MAX_STEPS,
            memory_window: DEFAULT_MEMORY_WINDOW,
            suggest_followups: true,
            index_turns: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceKind {
    Thought,
    Action,
    Observation,
    Final,
    Followup,
    Error,
}

/// One entry of the live reasoning stream of a turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub turn: usize,
    pub kind: TraceKind,
    pub text: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub input: Option<Value>,
}

pub struct Agent {
    gateway: Gateway,
    registry: Arc<ToolRegistry>,
    services: Arc<Services>,
    clock: SharedClock,
    config: AgentConfig,
}

fn render_input(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

impl Agent {
    pub fn new(gateway: Gateway, registry: Arc<ToolRegistry>, services: Arc<Services>, clock: SharedClock) -> Self {
        Self {
            gateway,
            registry,
            services,
            clock,
            config: AgentConfig::default(),
        }
    }

    pub fn with_config(mut self, config: AgentConfig) -> Self {
        self.config = config;
        self
    }

    pub fn registry(&self) -> &Arc<ToolRegistry> {
        &self.registry
    }

    pub fn services(&self) -> &Arc<Services> {
        &self.services
    }

    pub fn config(&self) -> AgentConfig {
        self.config
    }

    /// Prompt header: tool menu, format instructions, memory and question.
    pub fn base_prompt(&self, session: &Session, user_message: &str) -> String {
        let specs = self.registry.specs();
        let menu: Vec<String> = specs.iter().map(|s| s.menu_line()).collect();
        let names: Vec<&str> = specs.iter().map(|s| s.name.as_str()).collect();
        let memory = session.memory(self.config.memory_window);
        let memory = if memory.is_empty() {
            String::new()
        } else {
            format!("Previous conversation:\n{memory}\n\n")
        };
        format!(
            "Answer the following questions as best you can. You have access to the following tools:\n\n\
{}\n\n\
Use the following format:\n\n\
Question: the input question you must answer\n\
Thought: you should always think about what to do\n\
Action: the action to take, should be one of [{}]\n\
Action Input: the input to the action, as a JSON object\n\
Observation: the result of the action\n\
... (this Thought/Action/Action Input/Observation can repeat N times)\n\
Thought: I now know the final answer\n\
Final Answer: the final answer to the original input question\n\n\
{memory}Begin!\n\nQuestion: {user_message}\nThought:",
            menu.join("\n"),
            names.join(", ")
        )
    }

    fn complete_parsed(&self, prompt: &str) -> Result<Parsed, AgentError> {
        let reply = self.gateway.complete(Role::Orchestration, prompt)?.text;
        if let Some(p) = parse_completion(&reply) {
            return Ok(p);
        }
        log::warn!("unparseable orchestration reply, asking again");
        let retry = format!("{prompt}{REPROMPT}");
        let reply2 = self.gateway.complete(Role::Orchestration, &retry)?.text;
        parse_completion(&reply2).ok_or(AgentError::MalformedActionParse(reply2))
    }

    fn execute(&self, session: &Session, action: &str, input: &Value) -> (String, AgentStep) {
        let mut step = AgentStep {
            thought: String::new(),
            action: action.to_string(),
            action_input: input.clone(),
            observation: String::new(),
            artifacts: Vec::new(),
            code_record_id: None,
        };
        let Some(tool) = self.registry.get(action) else {
            let e = AgentError::UnknownToolRequested(action.to_string());
            step.observation = format!("{e}. Available tools: {}.", self.registry.names().join(", "));
            return (step.observation.clone(), step);
        };
        step.action = tool.spec().name.clone();
        let env = ToolEnv {
            services: &self.services,
            session_dir: &session.dir,
        };
        match tool.call(&env, &normalize_input(tool.spec(), input)) {
            Ok(out) => {
                step.observation = out.observation;
                step.artifacts = out.artifacts;
                step.code_record_id = out.code_record_id;
            }
            Err(e) => step.observation = format!("Error: {e}"),
        }
        (step.observation.clone(), step)
    }

    /// Runs one turn to a final answer, a step limit or a failure. The turn
    /// is written to the session's provenance before it is returned; a
    /// failed turn is recorded too and then reported as the error.
    pub fn run_turn(
        &self,
        session: &mut Session,
        user_message: &str,
        on_event: &mut dyn FnMut(TraceEvent),
    ) -> Result<AgentTurn, AgentError> {
        std::fs::create_dir_all(&session.dir)?;
        let index = session.turns().len();
        let started_at = self.clock.now();
        let base = self.base_prompt(session, user_message);
        let mut scratch = String::new();
        let mut steps: Vec<AgentStep> = Vec::new();
        let mut emit = |kind, text: &str, input: Option<Value>| {
            on_event(TraceEvent {
                turn: index,
                kind,
                text: text.to_string(),
                input,
            })
        };

        let outcome: Result<(String, bool), AgentError>;
        loop {
            if steps.len() >= self.config.max_steps {
                let last = steps.last().map_or("", |s| s.observation.as_str());
                outcome = Ok((
                    format!(
                        "{STEP_LIMIT_MARKER} after {} steps without a final answer. Last observation: {last}",
                        steps.len()
                    ),
                    true,
                ));
                break;
            }
            match self.complete_parsed(&format!("{base}{scratch}")) {
                Err(e) => {
                    outcome = Err(e);
                    break;
                }
                Ok(Parsed::Final { thought, answer }) => {
                    if !thought.is_empty() {
                        emit(TraceKind::Thought, &thought, None);
                    }
                    outcome = Ok((answer, false));
                    break;
                }
                Ok(Parsed::Action { thought, action, input }) => {
                    if !thought.is_empty() {
                        emit(TraceKind::Thought, &thought, None);
                    }
                    emit(TraceKind::Action, &action, Some(input.clone()));
                    let (obs, mut step) = self.execute(session, &action, &input);
                    emit(TraceKind::Observation, &obs, None);
                    step.thought = thought.clone();
                    scratch.push_str(&format!(
                        " {thought}\nAction: {action}\nAction Input: {}\nObservation: {obs}\nThought:",
                        render_input(&input)
                    ));
                    steps.push(step);
                }
            }
        }

        let mut turn = AgentTurn {
            session_id: session.id.clone(),
            index,
            user_message: user_message.to_string(),
            steps,
            final_answer: String::new(),
            followup: None,
            step_limit_reached: false,
            error: None,
            started_at,
            ended_at: started_at,
        };
        match outcome {
            Ok((answer, limited)) => {
                turn.final_answer = answer;
                turn.step_limit_reached = limited;
                if self.config.suggest_followups {
                    turn.followup = self.suggest_followup(&turn);
                }
                turn.ended_at = self.clock.now();
                session.record(turn.clone())?;
                if let Some(rag) = self.services.rag.as_ref().filter(|_| self.config.index_turns) {
                    rag.ingest_interaction(
                        &session.id,
                        index,
                        &format!("User: {}\nAssistant: {}", turn.user_message, turn.final_answer),
                    );
                }
                emit(TraceKind::Final, &turn.final_answer, None);
                if let Some(f) = &turn.followup {
                    emit(TraceKind::Followup, f, None);
                }
                Ok(turn)
            }
            Err(e) => {
                turn.error = Some(e.to_string());
                turn.ended_at = self.clock.now();
                session.record(turn)?;
                emit(TraceKind::Error, &e.to_string(), None);
                Err(e)
            }
        }
    }

    /// One question the user might ask next. Best effort: backend errors and
    /// empty replies give `None`.
    pub fn suggest_followup(&self, turn: &AgentTurn) -> Option<String> {
        let prompt = format!(
            "Suggest one short follow-up question the user could ask next, given this exchange. \
Reply with the question only.\n\nUser: {}\nAssistant: {}",
            turn.user_message, turn.final_answer
        );
        match self.gateway.complete(Role::Qa, &prompt) {
            Ok(c) => {
                let text = c.text.trim();
                let text = text
                    .strip_prefix("Follow-up Suggestion:")
                    .unwrap_or(text)
                    .trim()
                    .trim_matches('"')
                    .trim();
                (!text.is_empty()).then(|| text.to_string())
            }
            Err(e) => {
                log::info!("no follow-up suggestion: {e}");
                None
            }
        }
    }
}
