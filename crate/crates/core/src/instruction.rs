//! From instructions to subgoal curricula.
//!
//! The default decomposer is rule based. The same interface can be served by
//! an external completion endpoint: the prompt is rendered from a few-shot
//! template, POSTed as `{"prompt": ...}`, and the returned `{"text": ...}` is
//! parsed as a bracketed list of quoted captions.

use std::fmt;
use std::time::Duration;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::ParseError;
use crate::semantics::{normalized_words, Caption, GoalLabel};
use crate::world::{ObjectId, Task};

pub const LLM_URL_ENV: &str = "LCA_LLM_URL";

const TASK_GRAMMAR: &str = "\"Stack the <color> object on top of the <color> object\", \
\"Stack all three objects\", \"Grasp the <color> object\" (colors: red, green, blue)";

/// Parses an instruction against the task grammar (case-insensitive).
///
/// "Stack X on Y" is accepted as a synonym of "Stack X on top of Y".
pub fn parse_task(text: &str) -> Result<Task, ParseError> {
    let err = || ParseError::Task {
        text: text.to_string(),
        expected: TASK_GRAMMAR,
    };
    let words = normalized_words(text);
    let w: Vec<&str> = words.iter().map(String::as_str).collect();
    let color = |c: &str| c.parse::<ObjectId>().map_err(|_| err());
    match w.as_slice() {
        ["stack", "all", "three", "objects"] => Ok(Task::TripleStack),
        ["grasp", "the", c, "object"] => Ok(Task::Grasp(color(c)?)),
        ["stack", "the", t, "object", "on", "top", "of", "the", b, "object"]
        | ["stack", "the", t, "object", "on", "the", b, "object"] => {
            Task::pair(color(t)?, color(b)?).map_err(|_| err())
        }
        _ => Err(err()),
    }
}

impl std::str::FromStr for Task {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Task, ParseError> {
        parse_task(s)
    }
}

impl Serialize for Task {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.text())
    }
}

impl<'de> Deserialize<'de> for Task {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Task, D::Error> {
        let s = String::deserialize(d)?;
        parse_task(&s).map_err(serde::de::Error::custom)
    }
}

/// Parses a goal label: a caption first, otherwise a task instruction.
pub fn parse_goal(text: &str) -> Result<GoalLabel, ParseError> {
    Caption::parse(text)
        .map(GoalLabel::Caption)
        .or_else(|_| parse_task(text).map(GoalLabel::Task))
}

impl Serialize for GoalLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.text())
    }
}

impl<'de> Deserialize<'de> for GoalLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<GoalLabel, D::Error> {
        let s = String::deserialize(d)?;
        parse_goal(&s).map_err(serde::de::Error::custom)
    }
}

/// Ordered, non-empty list of subgoal captions without consecutive repeats.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Caption>", into = "Vec<Caption>")]
pub struct Curriculum(Vec<Caption>);

impl Curriculum {
    pub fn new(captions: Vec<Caption>) -> Result<Curriculum, ParseError> {
        if captions.is_empty() {
            return Err(ParseError::EmptyCurriculum);
        }
        let mut out: Vec<Caption> = Vec::with_capacity(captions.len());
        for c in captions {
            if out.last() != Some(&c) {
                out.push(c);
            }
        }
        Ok(Curriculum(out))
    }

    pub fn captions(&self) -> &[Caption] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn last(&self) -> Caption {
        *self.0.last().expect("curriculum is non-empty")
    }

    /// `["caption", "caption", ...]`, the format completions are parsed from.
    pub fn to_list_text(&self) -> String {
        let quoted: Vec<String> = self.0.iter().map(|c| format!("\"{c}\"")).collect();
        format!("[{}]", quoted.join(", "))
    }
}

impl TryFrom<Vec<Caption>> for Curriculum {
    type Error = ParseError;

    fn try_from(v: Vec<Caption>) -> Result<Self, Self::Error> {
        Curriculum::new(v)
    }
}

impl From<Curriculum> for Vec<Caption> {
    fn from(c: Curriculum) -> Self {
        c.0
    }
}

impl fmt::Display for Curriculum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_list_text())
    }
}

/// Rule-based decomposition into subgoals.
///
/// The triple stack uses the canonical order red on blue, then green on red.
pub fn decompose(task: Task) -> Curriculum {
    use ObjectId::*;
    let captions = match task {
        Task::Grasp(o) => vec![Caption::Grasping(o)],
        Task::PairStack { top, bottom } => vec![Caption::Grasping(top), Caption::OnTop { top, bottom }],
        Task::TripleStack => vec![
            Caption::Grasping(Red),
            Caption::OnTop { top: Red, bottom: Blue },
            Caption::Grasping(Green),
            Caption::OnTop { top: Green, bottom: Red },
        ],
    };
    Curriculum::new(captions).expect("every rule yields at least one caption")
}

/// Few-shot prompt: a description of the setting, two worked examples and a
/// slot for the query task.
///
/// The default wording is a reconstruction of the kind of prompt used to
/// condition an instruction-tuned model, not a verbatim copy of any
/// published prompt.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub preamble: String,
    pub examples: [(String, Vec<String>); 2],
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate {
            preamble: "A robot arm works above a basket containing a red, a green and a blue object. \
It can pick up one object at a time and put it down on the floor of the basket or on top of \
another object. Break the task given to the robot into a short list of sub-goals. Every sub-goal \
must be a sentence of the form \"The robot is grasping the <color> object\" or \"The <color> \
object is on top of the <color> object\". Answer with a bracketed list of quoted sub-goals."
                .to_string(),
            examples: [
                (
                    "Put the green object on the blue object".to_string(),
                    vec![
                        "The robot is grasping the green object".to_string(),
                        "The green object is on top of the blue object".to_string(),
                    ],
                ),
                (
                    "Put the blue object on the red object".to_string(),
                    vec![
                        "The robot is grasping the blue object".to_string(),
                        "The blue object is on top of the red object".to_string(),
                    ],
                ),
            ],
        }
    }
}

impl PromptTemplate {
    fn example_list(goals: &[String]) -> String {
        let quoted: Vec<String> = goals.iter().map(|g| format!("\"{g}\"")).collect();
        format!("[{}]", quoted.join(", "))
    }
}

pub fn render_prompt(template: &PromptTemplate, task: Task) -> String {
    let mut out = String::new();
    out.push_str(&template.preamble);
    out.push_str("\n\n");
    for (instruction, goals) in &template.examples {
        out.push_str(&format!(
            "Task: {instruction}\nSub-goals: {}\n\n",
            PromptTemplate::example_list(goals)
        ));
    }
    out.push_str(&format!("Task: {}\nSub-goals:", task.text()));
    out
}

/// Extracts the first bracketed list of quoted strings and parses each one
/// as a caption. Double or single quotes are accepted.
pub fn parse_completion(text: &str) -> Result<Curriculum, ParseError> {
    let no_list = || ParseError::NoList(text.to_string());
    let open = text.find('[').ok_or_else(no_list)?;
    let close = open + text[open..].find(']').ok_or_else(no_list)?;
    let body = &text[open + 1..close];

    let mut items = Vec::new();
    let mut chars = body.char_indices();
    while let Some((i, ch)) = chars.next() {
        match ch {
            '"' | '\'' => {
                let start = i + 1;
                let end = loop {
                    match chars.next() {
                        Some((j, c)) if c == ch => break j,
                        Some(_) => {}
                        None => return Err(ParseError::Caption(body[start..].to_string())),
                    }
                };
                items.push(&body[start..end]);
            }
            c if c == ',' || c.is_whitespace() => {}
            _ => {
                let rest = body[i..].split(',').next().unwrap_or_default().trim();
                return Err(ParseError::Caption(rest.to_string()));
            }
        }
    }
    let captions = items
        .into_iter()
        .map(Caption::parse)
        .collect::<Result<Vec<_>, _>>()?;
    Curriculum::new(captions)
}

/// Where to find the optional completion service.
#[derive(Clone, Debug, PartialEq)]
pub struct EndpointConfig {
    pub url: String,
    pub timeout: Duration,
    /// Total attempts before falling back to the rule decomposer.
    pub max_attempts: usize,
    pub template: PromptTemplate,
}

impl EndpointConfig {
    pub fn new(url: impl Into<String>) -> Self {
        EndpointConfig {
            url: url.into(),
            timeout: Duration::from_secs(30),
            max_attempts: 3,
            template: PromptTemplate::default(),
        }
    }

    /// Reads the endpoint URL from `LCA_LLM_URL`; `None` when unset or empty.
    pub fn from_env() -> Option<Self> {
        std::env::var(LLM_URL_ENV)
            .ok()
            .filter(|u| !u.trim().is_empty())
            .map(EndpointConfig::new)
    }
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    prompt: &'a str,
}

#[derive(Deserialize)]
struct CompletionResponse {
    text: String,
}

/// Result of asking the external decomposer, including what went wrong.
#[derive(Clone, Debug, PartialEq)]
pub struct DecomposeOutcome {
    pub curriculum: Curriculum,
    pub attempts: usize,
    pub fell_back: bool,
    pub warnings: Vec<String>,
}

pub fn external_decompose(endpoint: &EndpointConfig, task: Task) -> DecomposeOutcome {
    let prompt = render_prompt(&endpoint.template, task);
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(endpoint.timeout))
        .build()
        .into();
    let mut warnings = Vec::new();
    let mut attempts = 0;
    while attempts < endpoint.max_attempts.max(1) {
        attempts += 1;
        let reply = agent
            .post(&endpoint.url)
            .send_json(CompletionRequest { prompt: &prompt })
            .and_then(|mut r| r.body_mut().read_json::<CompletionResponse>());
        let text = match reply {
            Ok(r) => r.text,
            Err(e) => {
                let msg = format!("completion endpoint {} unreachable: {e}; using rule decomposer", endpoint.url);
                warn!("{msg}");
                warnings.push(msg);
                break;
            }
        };
        match parse_completion(&text) {
            Ok(curriculum) => {
                return DecomposeOutcome {
                    curriculum,
                    attempts,
                    fell_back: false,
                    warnings,
                }
            }
            Err(e) => {
                let msg = format!("attempt {attempts}: unusable completion: {e}");
                warn!("{msg}");
                warnings.push(msg);
            }
        }
    }
    DecomposeOutcome {
        curriculum: decompose(task),
        attempts,
        fell_back: true,
        warnings,
    }
}

/// Which decomposer a run uses.
#[derive(Clone, Debug, PartialEq, Default)]
pub enum CurriculumSource {
    #[default]
    Rule,
    External(EndpointConfig),
}

impl CurriculumSource {
    pub fn curriculum(&self, task: Task) -> Curriculum {
        match self {
            CurriculumSource::Rule => decompose(task),
            CurriculumSource::External(ep) => external_decompose(ep, task).curriculum,
        }
    }
}
