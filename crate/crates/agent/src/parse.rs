//! Parser for thought/action/final-answer completions.

use serde_json::Value;

#[derive(Debug, Clone, PartialEq)]
pub enum Parsed {
    Action {
        thought: String,
        action: String,
        input: Value,
    },
    Final {
        thought: String,
        answer: String,
    },
}

fn strip_label<'a>(line: &'a str, label: &str) -> Option<&'a str> {
    let t = line.trim_start().trim_start_matches(['*', '#', ' ']);
    let head = t.get(..label.len())?;
    if head.eq_ignore_ascii_case(label) {
        Some(t[label.len()..].trim_start_matches(['*', ' ']).trim())
    } else {
        None
    }
}

fn clean_thought(lines: &[&str]) -> String {
    let text = lines.join("\n");
    let text = text.trim();
    strip_label(text, "Thought:").unwrap_or(text).trim().to_string()
}

/// Reads the value after `Action Input:`: JSON when it parses, a string
/// otherwise. Code fences around it are removed.
pub fn parse_action_input(raw: &str) -> Value {
    let mut s = raw.trim();
    if let Some(rest) = s.strip_prefix("```") {
        s = rest.trim_start_matches(|c: char| c.is_alphanumeric());
        s = s.strip_suffix("```").unwrap_or(s).trim();
    }
    if s.is_empty() {
        return Value::Null;
    }
    serde_json::from_str(s).unwrap_or_else(|_| Value::String(s.trim_matches('"').to_string()))
}

/// `Action:` plus `Action Input:` lines, or a `Final Answer:` line; the
/// earliest of the two forms wins. Anything else is `None`.
pub fn parse_completion(text: &str) -> Option<Parsed> {
    let lines: Vec<&str> = text.lines().collect();
    let action_at = lines.iter().position(|l| strip_label(l, "Action:").is_some());
    let final_at = lines.iter().position(|l| strip_label(l, "Final Answer:").is_some());
    match (action_at, final_at) {
        (Some(a), f) if f.is_none_or(|f| a < f) => {
            let action = strip_label(lines[a], "Action:")?.to_string();
            if action.is_empty() {
                return None;
            }
            let rel = lines[a + 1..]
                .iter()
                .position(|l| strip_label(l, "Action Input:").is_some())?;
            let i = a + 1 + rel;
            let mut input_lines = vec![strip_label(lines[i], "Action Input:")?];
            for l in &lines[i + 1..] {
                if strip_label(l, "Observation:").is_some()
                    || strip_label(l, "Thought:").is_some()
                    || strip_label(l, "Final Answer:").is_some()
                {
                    break;
                }
                input_lines.push(l);
            }
            Some(Parsed::Action {
                thought: clean_thought(&lines[..a]),
                action,
                input: parse_action_input(&input_lines.join("\n")),
            })
        }
        (_, Some(f)) => {
            let first = strip_label(lines[f], "Final Answer:")?;
            let mut answer = first.to_string();
            for l in &lines[f + 1..] {
                answer.push('\n');
                answer.push_str(l);
            }
            Some(Parsed::Final {
                thought: clean_thought(&lines[..f]),
                answer: answer.trim().to_string(),
            })
        }
        _ => None,
    }
}
