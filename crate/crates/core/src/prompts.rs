//! Versioned prompt templates, compiled into the binary from `prompts/`.

use crate::backend::template::render;

pub const GRAMMAR: &str = include_str!("../prompts/grammar.txt");
pub const STRATEGY_GEN: &str = include_str!("../prompts/strategy-gen.txt");
pub const REFLECTION: &str = include_str!("../prompts/reflection.txt");
pub const OBSERVER_SUMMARY: &str = include_str!("../prompts/observer-summary.txt");
pub const NODE_DECISION: &str = include_str!("../prompts/node-decision.txt");
pub const JUDGE: &str = include_str!("../prompts/judge.txt");
pub const PSA_CONFLICT: &str = include_str!("../prompts/psa-conflict.txt");

pub const SYSTEM: &str = "You write strategies for a network node in a small JSON rule language. \
Follow the requested output format exactly.";

/// Fills a template. `{{ITEMS}}` is left in place for the ranker.
pub fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut all: Vec<(&str, &str)> = vec![("grammar", GRAMMAR.trim_end())];
    all.extend_from_slice(vars);
    render(template, &all)
}
