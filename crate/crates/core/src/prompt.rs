//! Prompt templates for the Coder and Judge agents.
//!
//! Bodies are shipped as text assets. Placeholders are `{name}` tokens drawn
//! from a fixed vocabulary; any other brace (JSON schemas, CUDA code in the
//! substituted values) is left alone. Substitution is a single left-to-right
//! pass, so values are never rescanned.

use alloc::collections::BTreeMap;
use alloc::string::String;
use serde::{Deserialize, Serialize};

/// Every placeholder name a template may use.
pub const PLACEHOLDERS: &[&str] = &[
    "arch_src",
    "ERROR_LOG",
    "CUDA_CODE",
    "NCU_METRICS",
    "gpu_name",
    "gpu_arch",
    "gpu_items",
    "optimization_suggestion",
    "Problem",
    "few_base",
    "few_new",
    "python_code",
    "PYTORCH_CODE",
];

/// Reference/optimized pair used as the one-shot exemplar in the first round.
pub const FEW_SHOT_BASE: &str = include_str!("../assets/few_shot/base.py");
pub const FEW_SHOT_NEW: &str = include_str!("../assets/few_shot/new.py");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TemplateKind {
    CoderInitial,
    CoderCorrect,
    CoderOptimize,
    JudgeCorrect,
    JudgeOptimize,
}

impl TemplateKind {
    pub const ALL: [TemplateKind; 5] = [
        TemplateKind::CoderInitial,
        TemplateKind::CoderCorrect,
        TemplateKind::CoderOptimize,
        TemplateKind::JudgeCorrect,
        TemplateKind::JudgeOptimize,
    ];

    pub fn body(self) -> &'static str {
        match self {
            TemplateKind::CoderInitial => include_str!("../assets/prompts/coder_initial.txt"),
            TemplateKind::CoderCorrect => include_str!("../assets/prompts/coder_correct.txt"),
            TemplateKind::CoderOptimize => include_str!("../assets/prompts/coder_optimize.txt"),
            TemplateKind::JudgeCorrect => include_str!("../assets/prompts/judge_correct.txt"),
            TemplateKind::JudgeOptimize => include_str!("../assets/prompts/judge_optimize.txt"),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateKind::CoderInitial => "CODER_INITIAL",
            TemplateKind::CoderCorrect => "CODER_CORRECT",
            TemplateKind::CoderOptimize => "CODER_OPTIMIZE",
            TemplateKind::JudgeCorrect => "JUDGE_CORRECT",
            TemplateKind::JudgeOptimize => "JUDGE_OPTIMIZE",
        }
    }

    pub fn is_judge(self) -> bool {
        matches!(self, TemplateKind::JudgeCorrect | TemplateKind::JudgeOptimize)
    }

    /// Placeholder names used by this template, in first-occurrence order.
    pub fn placeholders(self) -> alloc::vec::Vec<&'static str> {
        let mut out = alloc::vec::Vec::new();
        for seg in scan(self.body()) {
            if let Segment::Slot(name) = seg {
                if !out.contains(&name) {
                    out.push(name);
                }
            }
        }
        out
    }
}

/// Placeholder values keyed by placeholder name.
pub type PromptContext = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("no value supplied for placeholder `{{{0}}}`")]
    UnresolvedPlaceholder(String),
}

enum Segment<'a> {
    Text(&'a str),
    Slot(&'static str),
}

fn placeholder_at(rest: &str) -> Option<&'static str> {
    let inner = rest.strip_prefix('{')?;
    let end = inner.find('}')?;
    let name = &inner[..end];
    PLACEHOLDERS.iter().copied().find(|p| *p == name)
}

fn scan(body: &str) -> impl Iterator<Item = Segment<'_>> {
    let mut pos = 0;
    let mut pending: Option<&'static str> = None;
    core::iter::from_fn(move || {
        if let Some(name) = pending.take() {
            return Some(Segment::Slot(name));
        }
        if pos >= body.len() {
            return None;
        }
        let mut search = pos;
        while let Some(off) = body[search..].find('{') {
            let at = search + off;
            if let Some(name) = placeholder_at(&body[at..]) {
                let text = &body[pos..at];
                pos = at + name.len() + 2;
                if text.is_empty() {
                    return Some(Segment::Slot(name));
                }
                pending = Some(name);
                return Some(Segment::Text(text));
            }
            search = at + 1;
        }
        let text = &body[pos..];
        pos = body.len();
        Some(Segment::Text(text))
    })
}

/// Substitutes every placeholder of `body` from `ctx`. Extra keys are ignored.
pub fn render_template(body: &str, ctx: &PromptContext) -> Result<String, PromptError> {
    let mut out = String::with_capacity(body.len() + ctx.values().map(String::len).sum::<usize>());
    for seg in scan(body) {
        match seg {
            Segment::Text(t) => out.push_str(t),
            Segment::Slot(name) => match ctx.get(name) {
                Some(v) => out.push_str(v),
                None => return Err(PromptError::UnresolvedPlaceholder(name.into())),
            },
        }
    }
    Ok(out)
}

pub fn render_prompt(kind: TemplateKind, ctx: &PromptContext) -> Result<String, PromptError> {
    render_template(kind.body(), ctx)
}

/// Builds a context from `(name, value)` pairs.
pub fn context<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> PromptContext {
    pairs.into_iter().map(|(k, v)| (String::from(k), String::from(v))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn declared_placeholders_per_template() {
        assert_eq!(TemplateKind::CoderInitial.placeholders(), vec!["few_base", "few_new", "arch_src"]);
        assert_eq!(TemplateKind::CoderCorrect.placeholders(), vec!["ERROR_LOG", "CUDA_CODE", "Problem"]);
        assert_eq!(
            TemplateKind::CoderOptimize.placeholders(),
            vec!["gpu_name", "gpu_arch", "gpu_items", "CUDA_CODE", "optimization_suggestion"]
        );
        assert_eq!(TemplateKind::JudgeCorrect.placeholders(), vec!["ERROR_LOG", "PYTORCH_CODE", "CUDA_CODE"]);
        assert_eq!(
            TemplateKind::JudgeOptimize.placeholders(),
            vec!["gpu_name", "gpu_arch", "gpu_items", "python_code", "CUDA_CODE", "NCU_METRICS"]
        );
    }

    #[test]
    fn initial_prompt_places_arch_source() {
        let ctx = context([("arch_src", "X"), ("few_base", "A"), ("few_new", "B")]);
        let out = render_prompt(TemplateKind::CoderInitial, &ctx).unwrap();
        assert!(out.contains("The example given architecture is:\n```python\nA\n```"));
        assert!(out.contains("You are given the following architecture:\n```python\nX\n```"));
    }

    #[test]
    fn missing_value_is_reported_by_name() {
        let ctx = context([
            ("gpu_name", "g"),
            ("gpu_arch", "a"),
            ("gpu_items", "i"),
            ("python_code", "p"),
            ("CUDA_CODE", "c"),
        ]);
        assert_eq!(
            render_prompt(TemplateKind::JudgeOptimize, &ctx),
            Err(PromptError::UnresolvedPlaceholder("NCU_METRICS".into()))
        );
    }

    #[test]
    fn empty_values_leave_surrounding_text_intact() {
        for kind in TemplateKind::ALL {
            let ctx: PromptContext = kind.placeholders().into_iter().map(|p| (p.into(), String::new())).collect();
            let out = render_prompt(kind, &ctx).unwrap();
            let mut stripped = String::from(kind.body());
            for p in kind.placeholders() {
                stripped = stripped.replace(&alloc::format!("{{{p}}}"), "");
            }
            assert_eq!(out, stripped, "{kind:?}");
        }
    }

    #[test]
    fn json_schema_braces_are_not_placeholders() {
        let body = "{\n  \"critical_issue\": \"x\"\n} {unknown} {CUDA_CODE}";
        let out = render_template(body, &context([("CUDA_CODE", "{ERROR_LOG}")])).unwrap();
        assert_eq!(out, "{\n  \"critical_issue\": \"x\"\n} {unknown} {ERROR_LOG}");
    }
}
