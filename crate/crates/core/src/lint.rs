//! Token-level audit for "fake" kernels: submissions that carry no device
//! code, or that route execution back to framework operators when the custom
//! path raises or fails to load.
//!
//! This is pattern matching over Python source text, not analysis. It misses
//! plenty of indirect fallbacks; it is meant to flag the obvious ones for a
//! human to look at.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LintRule {
    NoDeviceKernel,
    TryExceptFallback,
    LoadFailFallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LintFinding {
    pub rule: LintRule,
    /// 1-based inclusive line range.
    pub span: (usize, usize),
    pub excerpt: String,
}

/// First path component after `torch.` that is allocation or plumbing rather
/// than a compute operator.
const TORCH_UTILITIES: &[&str] = &[
    "as_tensor",
    "backends",
    "cuda",
    "device",
    "dtype",
    "empty",
    "empty_like",
    "from_numpy",
    "full",
    "full_like",
    "is_tensor",
    "jit",
    "manual_seed",
    "no_grad",
    "ones",
    "ones_like",
    "Size",
    "tensor",
    "utils",
    "zeros",
    "zeros_like",
];

/// Substrings that mark a name as holding a compiled extension handle.
const LOAD_HANDLE_HINTS: &[&str] = &["module", "ext", "loaded", "lib", "compiled", "kernel"];

const DEVICE_KERNEL_TOKEN: &str = "__global__";

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Dotted path following `prefix` at `at`, if it is a call.
fn called_path<'a>(text: &'a str, at: usize, prefix: &str) -> Option<&'a str> {
    if text[..at].chars().next_back().is_some_and(|c| is_ident_char(c) || c == '.') {
        return None;
    }
    let rest = &text[at + prefix.len()..];
    let end = rest.find(|c: char| !(is_ident_char(c) || c == '.')).unwrap_or(rest.len());
    let path = &rest[..end];
    (!path.is_empty() && rest[end..].trim_start().starts_with('(')).then_some(path)
}

/// True when the line calls a framework compute operator.
fn calls_framework_op(line: &str) -> bool {
    let code = line.split('#').next().unwrap_or("");
    for (at, _) in code.match_indices("torch.") {
        if let Some(path) = called_path(code, at, "torch.") {
            let head = path.split('.').next().unwrap_or("");
            if path.starts_with("nn.functional.") || !TORCH_UTILITIES.contains(&head) {
                return true;
            }
        }
    }
    code.match_indices("F.").any(|(at, _)| called_path(code, at, "F.").is_some())
}

struct Line<'a> {
    indent: usize,
    text: &'a str,
}

fn lines(source: &str) -> Vec<Line<'_>> {
    source.lines().map(|l| Line { indent: l.len() - l.trim_start().len(), text: l }).collect()
}

/// Index of the last line of the indented block opened at `head`.
fn block_end(ls: &[Line<'_>], head: usize) -> usize {
    let mut end = head;
    for (i, l) in ls.iter().enumerate().skip(head + 1) {
        if l.text.trim().is_empty() {
            continue;
        }
        if l.indent <= ls[head].indent {
            break;
        }
        end = i;
    }
    end
}

/// Checks a block header; on a hit, returns the span if its inline tail or
/// body calls a framework operator.
fn fallback_block(ls: &[Line<'_>], head: usize) -> Option<(usize, usize)> {
    let stmt = ls[head].text.trim();
    let colon = stmt.find(':')?;
    let inline = &stmt[colon + 1..];
    let end = block_end(ls, head);
    let hit = calls_framework_op(inline) || ls[head + 1..=end].iter().any(|l| calls_framework_op(l.text));
    hit.then_some((head, end))
}

fn is_load_guard(stmt: &str) -> bool {
    let Some(cond) = stmt.strip_prefix("if ") else {
        return false;
    };
    let cond = cond.split(':').next().unwrap_or("");
    let lower = cond.to_ascii_lowercase();
    let names_handle = LOAD_HANDLE_HINTS.iter().any(|h| lower.contains(h));
    names_handle && (lower.contains(" is none") || lower.trim_start().starts_with("not "))
}

fn finding(rule: LintRule, ls: &[Line<'_>], (a, b): (usize, usize)) -> LintFinding {
    LintFinding { rule, span: (a + 1, b + 1), excerpt: ls[a..=b].iter().map(|l| l.text).collect::<Vec<_>>().join("\n") }
}

pub fn lint_kernel(source: &str) -> Vec<LintFinding> {
    let ls = lines(source);
    let mut out = Vec::new();
    if ls.is_empty() {
        return out;
    }
    if !source.contains(DEVICE_KERNEL_TOKEN) {
        let at = ls.iter().position(|l| l.text.trim_start().starts_with("class ModelNew")).unwrap_or(0);
        out.push(finding(LintRule::NoDeviceKernel, &ls, (at, at)));
    }
    for i in 0..ls.len() {
        let stmt = ls[i].text.trim();
        if stmt.starts_with("except") && stmt.contains(':') {
            if let Some(span) = fallback_block(&ls, i) {
                out.push(finding(LintRule::TryExceptFallback, &ls, span));
            }
        } else if is_load_guard(stmt) {
            if let Some(span) = fallback_block(&ls, i) {
                out.push(finding(LintRule::LoadFailFallback, &ls, span));
            }
        }
    }
    out.sort_by_key(|f| (f.rule, f.span));
    out
}

/// Short human-readable name for a rule.
pub fn rule_name(rule: LintRule) -> String {
    match rule {
        LintRule::NoDeviceKernel => "NO_DEVICE_KERNEL",
        LintRule::TryExceptFallback => "TRY_EXCEPT_FALLBACK",
        LintRule::LoadFailFallback => "LOAD_FAIL_FALLBACK",
    }
    .to_string()
}
