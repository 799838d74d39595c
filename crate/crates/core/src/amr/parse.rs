//! PENMAN reader.
//!
//! Grammar accepted:
//!
//! ```text
//! node  := "(" VAR "/" CONCEPT (ROLE child)* ")"
//! child := node | VAR | CONSTANT
//! ```
//!
//! A bare symbol child is a variable reference when some node in the
//! expression defines it (forward references are allowed). Otherwise it is a
//! constant, except that undefined symbols shaped like a variable (a lowercase
//! letter followed by digits only, e.g. `b` or `p2`) are reported as unknown
//! references. Inverse roles (`:ARG0-of`) are stored as forward edges.

use std::collections::HashMap;

use super::graph::{inverse_base, AmrGraph, AmrNode, RelationTriple};
use super::AmrError;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("unbalanced parentheses at byte {offset}")]
    UnbalancedParens { offset: usize },
    #[error("variable {variable:?} defined twice (second definition at byte {offset})")]
    DuplicateVariable { offset: usize, variable: String },
    #[error("reference to undefined variable {variable:?} at byte {offset}")]
    UnknownVariableReference { offset: usize, variable: String },
    #[error("missing concept after '/' at byte {offset}")]
    EmptyConcept { offset: usize },
    #[error("expected '/' after variable at byte {offset}")]
    MissingSlash { offset: usize },
    #[error("unterminated string starting at byte {offset}")]
    UnterminatedString { offset: usize },
    #[error("unexpected {found} at byte {offset}")]
    UnexpectedToken { offset: usize, found: String },
    #[error("unexpected end of input at byte {offset}")]
    UnexpectedEnd { offset: usize },
    #[error("trailing input after graph at byte {offset}")]
    TrailingInput { offset: usize },
    #[error("node relates to itself at byte {offset}")]
    SelfRelation { offset: usize },
    #[error("duplicate relation triple at byte {offset}")]
    DuplicateTriple { offset: usize },
    #[error(transparent)]
    Invalid(#[from] AmrError),
}

impl ParseError {
    pub fn offset(&self) -> Option<usize> {
        use ParseError::*;
        match self {
            UnbalancedParens { offset }
            | DuplicateVariable { offset, .. }
            | UnknownVariableReference { offset, .. }
            | EmptyConcept { offset }
            | MissingSlash { offset }
            | UnterminatedString { offset }
            | UnexpectedToken { offset, .. }
            | UnexpectedEnd { offset }
            | TrailingInput { offset }
            | SelfRelation { offset }
            | DuplicateTriple { offset } => Some(*offset),
            Invalid(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Open,
    Close,
    Slash,
    Role(String),
    Symbol(String),
    Quoted(String),
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Open => "'('".into(),
            Tok::Close => "')'".into(),
            Tok::Slash => "'/'".into(),
            Tok::Role(r) => format!("role {r}"),
            Tok::Symbol(s) => format!("symbol {s:?}"),
            Tok::Quoted(s) => format!("string {s:?}"),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let mut toks = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(start, c)) = chars.peek() {
        match c {
            c if c.is_whitespace() => {
                chars.next();
            }
            '(' => {
                chars.next();
                toks.push((start, Tok::Open));
            }
            ')' => {
                chars.next();
                toks.push((start, Tok::Close));
            }
            '/' => {
                chars.next();
                toks.push((start, Tok::Slash));
            }
            '"' => {
                chars.next();
                let mut value = String::new();
                let mut closed = false;
                while let Some((_, c)) = chars.next() {
                    match c {
                        '\\' => match chars.next() {
                            Some((_, esc)) => value.push(esc),
                            None => break,
                        },
                        '"' => {
                            closed = true;
                            break;
                        }
                        c => value.push(c),
                    }
                }
                if !closed {
                    return Err(ParseError::UnterminatedString { offset: start });
                }
                toks.push((start, Tok::Quoted(value)));
            }
            _ => {
                let mut word = String::new();
                while let Some(&(_, c)) = chars.peek() {
                    if c.is_whitespace() || matches!(c, '(' | ')' | '/' | '"') {
                        break;
                    }
                    word.push(c);
                    chars.next();
                }
                let tok = if word.starts_with(':') {
                    Tok::Role(word)
                } else {
                    Tok::Symbol(word)
                };
                toks.push((start, tok));
            }
        }
    }
    Ok(toks)
}

/// Parenthesis balance outside string literals; reports the first unmatched
/// `)` or, failing that, the last unclosed `(`.
fn check_balance(text: &str) -> Result<(), ParseError> {
    let mut open = Vec::new();
    let mut in_string = false;
    let mut string_start = 0;
    let mut escaped = false;
    for (i, c) in text.char_indices() {
        if in_string {
            match (escaped, c) {
                (true, _) => escaped = false,
                (false, '\\') => escaped = true,
                (false, '"') => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => {
                in_string = true;
                string_start = i;
            }
            '(' => open.push(i),
            ')' if open.pop().is_none() => return Err(ParseError::UnbalancedParens { offset: i }),
            _ => {}
        }
    }
    if in_string {
        return Err(ParseError::UnterminatedString {
            offset: string_start,
        });
    }
    match open.last() {
        Some(&offset) => Err(ParseError::UnbalancedParens { offset }),
        None => Ok(()),
    }
}

#[derive(Debug)]
struct NodeAst {
    variable: String,
    var_offset: usize,
    concept: String,
    edges: Vec<(usize, String, Child)>,
}

#[derive(Debug)]
enum Child {
    Node(NodeAst),
    Symbol(usize, String),
    Quoted(String),
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&(usize, Tok)> {
        self.toks.get(self.pos)
    }

    fn offset(&self) -> usize {
        self.peek().map_or(self.end, |(o, _)| *o)
    }

    fn next(&mut self) -> Result<(usize, Tok), ParseError> {
        let tok = self
            .toks
            .get(self.pos)
            .cloned()
            .ok_or(ParseError::UnexpectedEnd { offset: self.end })?;
        self.pos += 1;
        Ok(tok)
    }

    fn node(&mut self) -> Result<NodeAst, ParseError> {
        match self.next()? {
            (_, Tok::Open) => {}
            (offset, tok) => {
                return Err(ParseError::UnexpectedToken {
                    offset,
                    found: tok.describe(),
                })
            }
        }
        let (var_offset, variable) = match self.next()? {
            (o, Tok::Symbol(s)) => (o, s),
            (offset, _) => return Err(ParseError::MissingSlash { offset }),
        };
        match self.peek() {
            Some((_, Tok::Slash)) => {
                self.pos += 1;
            }
            _ => {
                return Err(ParseError::MissingSlash {
                    offset: self.offset(),
                })
            }
        }
        let concept = match self.peek() {
            Some((_, Tok::Symbol(s) | Tok::Quoted(s))) if !s.is_empty() => {
                let c = s.clone();
                self.pos += 1;
                c
            }
            _ => {
                return Err(ParseError::EmptyConcept {
                    offset: self.offset(),
                })
            }
        };
        let mut edges = Vec::new();
        loop {
            match self.next()? {
                (_, Tok::Close) => break,
                (offset, Tok::Role(role)) => {
                    if role.len() < 2 {
                        return Err(ParseError::UnexpectedToken {
                            offset,
                            found: "empty role".into(),
                        });
                    }
                    let child = match self.peek() {
                        Some((_, Tok::Open)) => Child::Node(self.node()?),
                        Some((o, Tok::Symbol(s))) => {
                            let c = Child::Symbol(*o, s.clone());
                            self.pos += 1;
                            c
                        }
                        Some((_, Tok::Quoted(s))) => {
                            let c = Child::Quoted(s.clone());
                            self.pos += 1;
                            c
                        }
                        Some((o, tok)) => {
                            return Err(ParseError::UnexpectedToken {
                                offset: *o,
                                found: tok.describe(),
                            })
                        }
                        None => return Err(ParseError::UnexpectedEnd { offset: self.end }),
                    };
                    edges.push((offset, role, child));
                }
                (offset, tok) => {
                    return Err(ParseError::UnexpectedToken {
                        offset,
                        found: tok.describe(),
                    })
                }
            }
        }
        Ok(NodeAst {
            variable,
            var_offset,
            concept,
            edges,
        })
    }
}

fn looks_like_variable(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase()) && chars.all(|c| c.is_ascii_digit())
}

fn collect_definitions<'a>(
    node: &'a NodeAst,
    defs: &mut HashMap<&'a str, ()>,
) -> Result<(), ParseError> {
    if defs.insert(&node.variable, ()).is_some() {
        return Err(ParseError::DuplicateVariable {
            offset: node.var_offset,
            variable: node.variable.clone(),
        });
    }
    for (_, _, child) in &node.edges {
        if let Child::Node(n) = child {
            collect_definitions(n, defs)?;
        }
    }
    Ok(())
}

struct Builder<'a> {
    defs: HashMap<&'a str, ()>,
    index: HashMap<&'a str, usize>,
    nodes: Vec<AmrNode>,
    edges: Vec<RelationTriple>,
    triples: HashMap<(usize, String, usize), ()>,
}

impl<'a> Builder<'a> {
    fn variable_node(&mut self, var: &'a str) -> usize {
        if let Some(&i) = self.index.get(var) {
            return i;
        }
        let i = self.nodes.len();
        // concept filled in when the definition is reached
        self.nodes.push(AmrNode::concept(var, String::new()));
        self.index.insert(var, i);
        i
    }

    fn visit(&mut self, node: &'a NodeAst) -> Result<usize, ParseError> {
        let me = self.variable_node(&node.variable);
        self.nodes[me].concept = node.concept.clone();
        for (offset, role, child) in &node.edges {
            let other = match child {
                // index assigned now so this edge precedes the child's own edges
                Child::Node(n) => self.variable_node(&n.variable),
                Child::Symbol(o, s) => {
                    if self.defs.contains_key(s.as_str()) {
                        self.variable_node(s)
                    } else if looks_like_variable(s) {
                        return Err(ParseError::UnknownVariableReference {
                            offset: *o,
                            variable: s.clone(),
                        });
                    } else {
                        self.nodes.push(AmrNode::constant(s.clone()));
                        self.nodes.len() - 1
                    }
                }
                Child::Quoted(s) => {
                    self.nodes.push(AmrNode::constant(s.clone()));
                    self.nodes.len() - 1
                }
            };
            if other == me {
                return Err(ParseError::SelfRelation { offset: *offset });
            }
            let inverted = match inverse_base(role) {
                Some(base) if !self.nodes[other].is_constant => {
                    Some(RelationTriple::new(other, base, me))
                }
                _ => None,
            };
            let edge = inverted.unwrap_or_else(|| RelationTriple::new(me, role.clone(), other));
            let key = (edge.source, edge.label.clone(), edge.target);
            if self.triples.insert(key, ()).is_some() {
                return Err(ParseError::DuplicateTriple { offset: *offset });
            }
            self.edges.push(edge);
            if let Child::Node(n) = child {
                self.visit(n)?;
            }
        }
        Ok(me)
    }
}

/// Parses one PENMAN expression into a graph whose nodes are numbered in
/// depth-first first-visit order (root is node 0).
pub fn parse_penman(text: &str) -> Result<AmrGraph, ParseError> {
    check_balance(text)?;
    let toks = lex(text)?;
    let mut parser = Parser {
        toks,
        pos: 0,
        end: text.len(),
    };
    let ast = parser.node()?;
    if parser.peek().is_some() {
        return Err(ParseError::TrailingInput {
            offset: parser.offset(),
        });
    }

    let mut defs = HashMap::new();
    collect_definitions(&ast, &mut defs)?;
    let mut builder = Builder {
        defs,
        index: HashMap::new(),
        nodes: Vec::new(),
        edges: Vec::new(),
        triples: HashMap::new(),
    };
    let root = builder.visit(&ast)?;
    debug_assert_eq!(root, 0);
    Ok(AmrGraph::new(builder.nodes, builder.edges, root)?)
}
