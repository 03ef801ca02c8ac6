use crate::kb::{Dialogue, Turn};

use super::{find_placeholders, Assignment, KeError, Template};

/// Adapts `value` to the casing of the surface it replaces: all-lowercase
/// mentions stay lowercase and a capitalized mention of a lowercase value
/// is capitalized. Otherwise the value is used as stored.
fn match_case(value: &str, original: Option<&str>) -> String {
    let Some(original) = original else {
        return value.to_string();
    };
    let has_upper = |s: &str| s.chars().any(char::is_uppercase);
    if !has_upper(original) {
        return value.to_lowercase();
    }
    if !has_upper(value) && original.chars().next().is_some_and(char::is_uppercase) {
        let mut chars = value.chars();
        if let Some(first) = chars.next() {
            return first.to_uppercase().chain(chars).collect();
        }
    }
    value.to_string()
}

/// Fills every placeholder of `template` from `assignment`. Text outside
/// placeholders, including API turns, is copied unchanged.
pub fn relex(template: &Template, assignment: &Assignment, id: impl Into<String>) -> Result<Dialogue, KeError> {
    let mut turns = Vec::with_capacity(template.turns.len());
    for turn in &template.turns {
        let text = turn.text();
        let mut out = String::with_capacity(text.len());
        let mut last = 0;
        for (span, p) in find_placeholders(text) {
            let value = assignment
                .get(&p.group)
                .and_then(|values| values.get(&p.attr))
                .ok_or_else(|| KeError::IncompleteAssignment {
                    group: p.group,
                    attr: p.attr.clone(),
                })?;
            out.push_str(&text[last..span.start]);
            out.push_str(&match_case(value, template.binding.get(&p)));
            last = span.end;
        }
        out.push_str(&text[last..]);
        let relexed = Turn::new(turn.speaker, &out).ok_or_else(|| KeError::InvalidTemplate {
            id: template.id.clone(),
            reason: "a turn relexicalizes to empty text".into(),
        })?;
        turns.push(relexed);
    }
    Ok(Dialogue::new(id, turns)?)
}

/// Relexicalizes with the template's own binding map, which reproduces the
/// source dialogue.
pub fn relex_with_binding(template: &Template) -> Result<Dialogue, KeError> {
    relex(template, &template.binding.as_assignment(), template.id.clone())
}
