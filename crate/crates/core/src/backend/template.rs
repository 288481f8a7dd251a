//! Prompt framing shared by the prompt builders and the scripted backend.
//!
//! Every prompt starts with a header line `### template: <name> <version>`.
//! Machine-readable payloads are wrapped in `<<data name>> ... <</data>>`
//! blocks and reorderable content in `<<item label>> ... <</item>>` blocks,
//! so a rule-based backend can read the same prompt a model would.

pub const HEADER_PREFIX: &str = "### template: ";

pub const STRATEGY_GEN: &str = "strategy-gen";
pub const REFLECTION: &str = "reflection";
pub const OBSERVER_SUMMARY: &str = "observer-summary";
pub const NODE_DECISION: &str = "node-decision";
pub const JUDGE: &str = "judge";
pub const PSA_CONFLICT: &str = "psa-conflict";

/// Returns `(name, version)` from the first header line in `text`.
pub fn find_template(text: &str) -> Option<(&str, &str)> {
    let line = text.lines().find_map(|l| l.strip_prefix(HEADER_PREFIX))?;
    let mut parts = line.split_whitespace();
    Some((parts.next()?, parts.next().unwrap_or("")))
}

pub fn data_block(name: &str, json: &str) -> String {
    format!("<<data {name}>>\n{json}\n<</data>>")
}

/// Contents of the first data block called `name`.
pub fn find_data<'a>(text: &'a str, name: &str) -> Option<&'a str> {
    let open = format!("<<data {name}>>");
    let start = text.find(&open)? + open.len();
    let end = text[start..].find("<</data>>")? + start;
    Some(text[start..end].trim())
}

pub fn item_block(label: &str, body: &str) -> String {
    format!("<<item {label}>>\n{body}\n<</item>>")
}

/// All item blocks in order of appearance, as `(label, body)`.
pub fn find_items(text: &str) -> Vec<(&str, &str)> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(i) = rest.find("<<item ") {
        let after = &rest[i + "<<item ".len()..];
        let Some(close) = after.find(">>") else { break };
        let label = &after[..close];
        let body_start = &after[close + 2..];
        let Some(end) = body_start.find("<</item>>") else { break };
        out.push((label, body_start[..end].trim()));
        rest = &body_start[end + "<</item>>".len()..];
    }
    out
}

/// Pulls a JSON object out of a free-form response: the first fenced code
/// block if present, otherwise the span from the first `{` to the last `}`.
pub fn extract_json(response: &str) -> &str {
    if let Some(start) = response.find("```") {
        let after = &response[start + 3..];
        let body_start = after.find('\n').map_or(0, |n| n + 1);
        if let Some(end) = after[body_start..].find("```") {
            return after[body_start..body_start + end].trim();
        }
    }
    match (response.find('{'), response.rfind('}')) {
        (Some(a), Some(b)) if b > a => &response[a..=b],
        _ => response.trim(),
    }
}

/// Substitutes `{{key}}` placeholders.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (k, v) in vars {
        out = out.replace(&format!("{{{{{k}}}}}"), v);
    }
    out
}
