//! Model backend abstraction, cost-accounted calls, and reply parsing.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde_json::{Map, Value};

use crate::cost::{CostEntry, CostLedger, Phase, PriceTable};
use crate::domain::{Correction, JudgeFeedback, JudgeMode, Optimization};
use crate::prompt::TemplateKind;

/// Everything a backend may need to answer one prompt.
///
/// Live backends only look at `prompt`; replay backends key on
/// `(task_id, kind, round, attempt)`.
#[derive(Debug, Clone, Copy)]
pub struct AgentRequest<'a> {
    pub task_id: &'a str,
    pub kind: TemplateKind,
    pub round: u32,
    /// Zero for the first ask, incremented on each re-ask within a round.
    pub attempt: u32,
    pub prompt: &'a str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentReply {
    pub raw_text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_s: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("network error: {0}")]
    Network(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("no recorded reply for {0}")]
    MissingTranscript(String),
    #[error("backend error: {0}")]
    Other(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Network(_))
    }
}

/// A chat-completion style model endpoint.
pub trait LlmBackend: Send + Sync {
    fn model_id(&self) -> &str;
    fn prices(&self) -> PriceTable;
    fn complete(&self, request: &AgentRequest<'_>) -> Result<AgentReply, BackendError>;
}

impl<B: LlmBackend + ?Sized> LlmBackend for &B {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }
    fn prices(&self) -> PriceTable {
        (**self).prices()
    }
    fn complete(&self, request: &AgentRequest<'_>) -> Result<AgentReply, BackendError> {
        (**self).complete(request)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AgentError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("budget exhausted: spent ${spent:.4} of ${cap:.4}")]
    BudgetExceeded { spent: f64, cap: f64 },
}

/// Extra attempts made after a retryable network failure.
pub const NETWORK_RETRIES: u32 = 2;

/// Calls the backend and books the call in `ledger`.
///
/// Refuses to call once the ledger has reached `budget_cap`.
pub fn call_agent(
    backend: &dyn LlmBackend,
    request: &AgentRequest<'_>,
    ledger: &mut CostLedger,
    budget_cap: Option<f64>,
) -> Result<AgentReply, AgentError> {
    if let Some(cap) = budget_cap {
        if ledger.api_dollars >= cap {
            return Err(AgentError::BudgetExceeded { spent: ledger.api_dollars, cap });
        }
    }
    let mut tries = 0;
    let reply = loop {
        match backend.complete(request) {
            Ok(r) => break r,
            Err(e) if e.is_retryable() && tries < NETWORK_RETRIES => tries += 1,
            Err(e) => return Err(e.into()),
        }
    };
    let phase = if request.kind.is_judge() { Phase::Judge } else { Phase::Generate };
    ledger.record(CostEntry {
        phase,
        dollars: backend.prices().cost(reply.prompt_tokens, reply.completion_tokens),
        prompt_tokens: reply.prompt_tokens,
        completion_tokens: reply.completion_tokens,
        seconds: reply.latency_s,
    });
    Ok(reply)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExtractError {
    #[error("coder reply contained no code")]
    EmptyReply,
}

fn is_fence(line: &str) -> bool {
    line.trim_start().starts_with("```")
}

/// Returns the body of the last fenced code block, or the trimmed reply when
/// there is no fence. An unterminated final fence runs to the end of the reply.
pub fn extract_kernel_code(raw_text: &str) -> Result<String, ExtractError> {
    let mut last: Option<Vec<&str>> = None;
    let mut current: Option<Vec<&str>> = None;
    for line in raw_text.lines() {
        match current.take() {
            None if is_fence(line) => current = Some(Vec::new()),
            None => {}
            Some(block) if is_fence(line) => last = Some(block),
            Some(mut block) => {
                block.push(line);
                current = Some(block);
            }
        }
    }
    if let Some(open) = current {
        last = Some(open);
    }
    let code = match last {
        Some(lines) => lines.join("\n"),
        None => raw_text.trim().to_string(),
    };
    if code.trim().is_empty() {
        return Err(ExtractError::EmptyReply);
    }
    Ok(code)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FeedbackError {
    #[error("no JSON object found in judge reply")]
    NoJsonFound,
    #[error("judge JSON is malformed: {0}")]
    Malformed(String),
    #[error("judge JSON is missing key `{0}`")]
    MissingKey(&'static str),
    #[error("judge JSON field `{0}` is empty")]
    EmptyField(&'static str),
    #[error("expected {expected:?} feedback but the judge answered in {found:?} form")]
    WrongMode { expected: JudgeMode, found: JudgeMode },
}

/// A schema field that went over its advisory word budget.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordCapWarning {
    pub field: &'static str,
    pub words: usize,
    pub cap: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedFeedback {
    pub feedback: JudgeFeedback,
    pub warnings: Vec<WordCapWarning>,
}

const CORRECTION_KEYS: [(&str, usize); 3] = [("critical_issue", 20), ("why_it_matters", 35), ("minimal_fix_hint", 20)];
const OPTIMIZATION_KEYS: [(&str, usize); 3] =
    [("bottleneck", 30), ("optimisation method", 35), ("modification plan", 35)];

fn normalize_key(k: &str) -> String {
    let mut s: String = k
        .trim()
        .chars()
        .map(|c| match c {
            '_' | '-' => ' ',
            c => c.to_ascii_lowercase(),
        })
        .collect();
    s = s.replace("optimization", "optimisation");
    s
}

/// Finds the end (exclusive) of a balanced object starting at `start`, and
/// copies it with raw control characters inside strings escaped.
fn balanced_object(text: &str, start: usize) -> Option<(usize, String)> {
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    let mut out = String::new();
    for (off, c) in text[start..].char_indices() {
        if in_str {
            if escaped {
                escaped = false;
                out.push(c);
            } else if c == '\\' {
                escaped = true;
                out.push(c);
            } else if c == '"' {
                in_str = false;
                out.push(c);
            } else if c == '\n' {
                out.push_str("\\n");
            } else if c == '\r' {
                out.push_str("\\r");
            } else if c == '\t' {
                out.push_str("\\t");
            } else if (c as u32) < 0x20 {
                out.push(' ');
            } else {
                out.push(c);
            }
            continue;
        }
        out.push(c);
        match c {
            '"' => in_str = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some((start + off + c.len_utf8(), out));
                }
            }
            _ => {}
        }
    }
    None
}

/// Returns the first `{...}` span of `text` that parses as a JSON object.
pub fn first_json_object(text: &str) -> Result<Map<String, Value>, FeedbackError> {
    let mut first_err: Option<String> = None;
    for (idx, _) in text.match_indices('{') {
        let Some((_, candidate)) = balanced_object(text, idx) else {
            continue;
        };
        match serde_json::from_str::<Value>(&candidate) {
            Ok(Value::Object(map)) => return Ok(map),
            Ok(_) => {}
            Err(e) => {
                first_err.get_or_insert_with(|| e.to_string());
            }
        }
    }
    match first_err {
        Some(e) => Err(FeedbackError::Malformed(e)),
        None => Err(FeedbackError::NoJsonFound),
    }
}

fn field_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn pull_fields(
    map: &Map<String, Value>,
    keys: &[(&'static str, usize); 3],
) -> Result<([String; 3], Vec<WordCapWarning>), FeedbackError> {
    let mut values: [String; 3] = Default::default();
    let mut warnings = Vec::new();
    for (slot, (key, cap)) in values.iter_mut().zip(keys) {
        let want = normalize_key(key);
        let v = map
            .iter()
            .find(|(k, _)| normalize_key(k) == want)
            .map(|(_, v)| field_text(v))
            .ok_or(FeedbackError::MissingKey(key))?;
        let v = v.trim().to_string();
        if v.is_empty() {
            return Err(FeedbackError::EmptyField(key));
        }
        let words = v.split_whitespace().count();
        if words > *cap {
            warnings.push(WordCapWarning { field: key, words, cap: *cap });
        }
        *slot = v;
    }
    Ok((values, warnings))
}

fn has_all(map: &Map<String, Value>, keys: &[(&'static str, usize); 3]) -> bool {
    keys.iter().all(|(k, _)| {
        let want = normalize_key(k);
        map.keys().any(|m| normalize_key(m) == want)
    })
}

/// Extracts and validates the Judge's JSON for the requested mode.
///
/// Word-cap overruns are reported as warnings, never as errors.
pub fn parse_judge_feedback(raw_text: &str, mode: JudgeMode) -> Result<ParsedFeedback, FeedbackError> {
    let map = first_json_object(raw_text)?;
    let (wanted, other, other_mode) = match mode {
        JudgeMode::Correction => (&CORRECTION_KEYS, &OPTIMIZATION_KEYS, JudgeMode::Optimization),
        JudgeMode::Optimization => (&OPTIMIZATION_KEYS, &CORRECTION_KEYS, JudgeMode::Correction),
    };
    if !has_all(&map, wanted) && has_all(&map, other) {
        return Err(FeedbackError::WrongMode { expected: mode, found: other_mode });
    }
    let ([a, b, c], warnings) = pull_fields(&map, wanted)?;
    let feedback = match mode {
        JudgeMode::Correction => {
            JudgeFeedback::correction(Correction { critical_issue: a, why_it_matters: b, minimal_fix_hint: c })
        }
        JudgeMode::Optimization => {
            JudgeFeedback::optimization(Optimization { bottleneck: a, optimisation_method: b, modification_plan: c })
        }
    };
    Ok(ParsedFeedback { feedback, warnings })
}

/// The prompt used to re-ask the Judge after an unparsable reply.
pub fn reask_prompt(prompt: &str, error: &FeedbackError) -> String {
    format!(
        "{prompt}\n\nYour previous reply could not be used: {error}. \
         Reply with only the JSON object in the specified format."
    )
}
