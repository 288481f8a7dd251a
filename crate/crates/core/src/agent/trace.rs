//! Decision traces: which observation led to which rule and which action.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::AgentError;
use crate::digest::short_digest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Actor {
    Strategy,
    Observer,
    Node,
    Assistant,
    Ranker,
}

impl Actor {
    fn name(self) -> &'static str {
        match self {
            Actor::Strategy => "strategy",
            Actor::Observer => "observer",
            Actor::Node => "node",
            Actor::Assistant => "assistant",
            Actor::Ranker => "ranker",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceNode {
    pub actor: Actor,
    pub label: String,
    /// Frame or round at which the period started, on period roots.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at: Option<u64>,
    pub input_digest: String,
    pub output_digest: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<TraceNode>,
}

impl TraceNode {
    pub fn new(actor: Actor, label: impl Into<String>, input: &str, output: &str) -> Self {
        TraceNode {
            actor,
            label: label.into(),
            at: None,
            input_digest: short_digest(input.as_bytes()),
            output_digest: short_digest(output.as_bytes()),
            children: Vec::new(),
        }
    }

    pub fn with_child(mut self, child: TraceNode) -> Self {
        self.children.push(child);
        self
    }

    /// Depth-first iterator over this node and its descendants.
    pub fn walk(&self) -> Vec<&TraceNode> {
        let mut out = vec![self];
        for c in &self.children {
            out.extend(c.walk());
        }
        out
    }

    /// Every root-to-leaf path, as node references.
    pub fn paths(&self) -> Vec<Vec<&TraceNode>> {
        if self.children.is_empty() {
            return vec![vec![self]];
        }
        let mut out = Vec::new();
        for c in &self.children {
            for mut p in c.paths() {
                p.insert(0, self);
                out.push(p);
            }
        }
        out
    }
}

/// A trace for one online run: a strategy-set root with one path per
/// query period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTrace {
    pub root: TraceNode,
}

impl DecisionTrace {
    pub fn new(strategy_ids: &[&str]) -> Self {
        let ids = strategy_ids.join(",");
        let short: Vec<&str> = strategy_ids.iter().map(|s| &s[..s.len().min(12)]).collect();
        DecisionTrace {
            root: TraceNode::new(Actor::Strategy, format!("strategy set [{}]", short.join(", ")), &ids, &ids),
        }
    }

    pub fn push(&mut self, node: TraceNode) {
        self.root.children.push(node);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }

    /// Graph text with identical sibling subtrees merged; edges carry the
    /// number of periods that followed them.
    pub fn to_dot(&self) -> String {
        let merged = merge(&[&self.root]);
        let mut out = String::from("digraph decisions {\n  rankdir=LR;\n  node [shape=box, fontname=\"Helvetica\"];\n");
        let mut next = 0usize;
        for m in &merged {
            emit(m, None, &mut next, &mut out);
        }
        out.push_str("}\n");
        out
    }
}

struct Merged<'a> {
    actor: Actor,
    label: &'a str,
    count: usize,
    children: Vec<Merged<'a>>,
}

/// Most distinct leaves kept under one merged parent.
const MAX_LEAVES: usize = 4;

fn merge<'a>(nodes: &[&'a TraceNode]) -> Vec<Merged<'a>> {
    let mut groups: Vec<(Actor, &'a str, Vec<&'a TraceNode>)> = Vec::new();
    for n in nodes {
        match groups.iter_mut().find(|(a, l, _)| *a == n.actor && *l == n.label) {
            Some((_, _, v)) => v.push(n),
            None => groups.push((n.actor, &n.label, vec![n])),
        }
    }
    groups
        .into_iter()
        .map(|(actor, label, members)| {
            let kids: Vec<&TraceNode> = members.iter().flat_map(|m| m.children.iter()).collect();
            let mut children = merge(&kids);
            if children.len() > MAX_LEAVES && children.iter().all(|c| c.children.is_empty()) {
                let rest: usize = children[MAX_LEAVES..].iter().map(|c| c.count).sum();
                children.truncate(MAX_LEAVES);
                children.push(Merged { actor: Actor::Assistant, label: "other actions", count: rest, children: vec![] });
            }
            Merged { actor, label, count: members.len(), children }
        })
        .collect()
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn emit(m: &Merged<'_>, parent: Option<usize>, next: &mut usize, out: &mut String) {
    let id = *next;
    *next += 1;
    let _ = writeln!(out, "  n{id} [label=\"{}: {}\"];", m.actor.name(), escape(m.label));
    if let Some(p) = parent {
        let _ = writeln!(out, "  n{p} -> n{id} [label=\"{}\"];", m.count);
    }
    for c in &m.children {
        emit(c, Some(id), next, out);
    }
}

/// The trace of a run as `(json, dot)`.
pub fn export_decision_trace(trace: Option<&DecisionTrace>) -> Result<(String, String), AgentError> {
    let t = trace.ok_or(AgentError::TracingDisabled)?;
    Ok((t.to_json(), t.to_dot()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn period(obs: &str, action: &str) -> TraceNode {
        TraceNode::new(Actor::Observer, obs, "w", obs).with_child(
            TraceNode::new(Actor::Node, "strategy abc: avoid_slots{3,5}", obs, "d")
                .with_child(TraceNode::new(Actor::Assistant, action, "d", action)),
        )
    }

    #[test]
    fn dot_merges_repeated_paths() {
        let mut t = DecisionTrace::new(&["abcdef0123456789"]);
        for _ in 0..3 {
            t.push(period("slots 3,5 utilization 1.0 (overused)", "action [1 1 1 0]"));
        }
        let dot = t.to_dot();
        assert_eq!(dot.matches("observer: slots 3,5").count(), 1);
        assert!(dot.contains("[label=\"3\"]"));
        assert_eq!(t.root.paths().len(), 3);
    }

    #[test]
    fn missing_trace_is_an_error() {
        assert_eq!(export_decision_trace(None), Err(AgentError::TracingDisabled));
    }
}
