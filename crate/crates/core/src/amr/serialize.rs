use super::graph::{canonical_variables, AmrGraph};
use super::traverse::{walk, Visit};
use super::AmrError;

fn is_plain_symbol(s: &str) -> bool {
    !s.is_empty()
        && !s.starts_with(':')
        && !s
            .chars()
            .any(|c| c.is_whitespace() || matches!(c, '(' | ')' | '/' | '"' | '\\'))
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if matches!(c, '"' | '\\') {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

fn is_variable_shaped(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase()) && chars.all(|c| c.is_ascii_digit())
}

fn constant_literal(value: &str) -> String {
    if is_plain_symbol(value) && !is_variable_shaped(value) {
        value.to_string()
    } else {
        quote(value)
    }
}

fn concept_literal(concept: &str) -> String {
    if is_plain_symbol(concept) {
        concept.to_string()
    } else {
        quote(concept)
    }
}

/// Writes the graph as a single-line PENMAN expression with canonical
/// variable names. Output depends only on the graph value.
pub fn serialize_penman(graph: &AmrGraph) -> Result<String, AmrError> {
    graph.validate()?;
    let vars = canonical_variables(graph.nodes());
    let nodes = graph.nodes();
    let mut out = String::new();
    walk(graph, |visit| match visit {
        Visit::Enter(i) => {
            let var = vars[i].as_deref().unwrap_or("x");
            out.push('(');
            out.push_str(var);
            out.push_str(" / ");
            out.push_str(&concept_literal(&nodes[i].concept));
        }
        Visit::Role(label) => {
            out.push(' ');
            out.push_str(&label);
            out.push(' ');
        }
        Visit::Leaf(i) => match &vars[i] {
            Some(v) => out.push_str(v),
            None => out.push_str(&constant_literal(&nodes[i].concept)),
        },
        Visit::Leave { .. } => out.push(')'),
    });
    Ok(out)
}
