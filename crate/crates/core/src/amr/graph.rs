use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::AmrError;

/// Role labels that end in `-of` but are not inverses of another role.
const NON_INVERSE_OF_ROLES: &[&str] = &[":consist-of", ":prep-on-behalf-of", ":prep-out-of"];

/// If `label` is written in inverse form (`:ARG0-of`), returns the forward label (`:ARG0`).
pub fn inverse_base(label: &str) -> Option<&str> {
    if NON_INVERSE_OF_ROLES.contains(&label) {
        return None;
    }
    label.strip_suffix("-of").filter(|base| base.len() > 1)
}

/// The inverse spelling of a forward label.
pub fn inverse_label(label: &str) -> String {
    format!("{label}-of")
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AmrNode {
    pub variable: Option<String>,
    pub concept: String,
    /// Attribute values (numbers, quoted strings, polarity) are constants.
    pub is_constant: bool,
}

impl AmrNode {
    pub fn concept(variable: impl Into<String>, concept: impl Into<String>) -> Self {
        Self {
            variable: Some(variable.into()),
            concept: concept.into(),
            is_constant: false,
        }
    }

    pub fn constant(value: impl Into<String>) -> Self {
        Self {
            variable: None,
            concept: value.into(),
            is_constant: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RelationTriple {
    pub source: usize,
    pub label: String,
    pub target: usize,
}

impl RelationTriple {
    pub fn new(source: usize, label: impl Into<String>, target: usize) -> Self {
        Self {
            source,
            label: label.into(),
            target,
        }
    }
}

/// A rooted, connected, edge-labelled concept graph.
///
/// Edges are stored in forward direction: an inverse role such as `:ARG0-of`
/// read from PENMAN text is stored as the `:ARG0` edge with its endpoints
/// swapped. Construction through [`AmrGraph::new`] validates every invariant,
/// so a value of this type is always well formed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmrGraph {
    nodes: Vec<AmrNode>,
    edges: Vec<RelationTriple>,
    root: usize,
}

impl AmrGraph {
    pub fn new(
        nodes: Vec<AmrNode>,
        edges: Vec<RelationTriple>,
        root: usize,
    ) -> Result<Self, AmrError> {
        let graph = Self { nodes, edges, root };
        graph.validate()?;
        Ok(graph)
    }

    /// A single-concept graph.
    pub fn single(variable: &str, concept: &str) -> Self {
        Self {
            nodes: vec![AmrNode::concept(variable, concept)],
            edges: Vec::new(),
            root: 0,
        }
    }

    pub(crate) fn from_parts_unchecked(
        nodes: Vec<AmrNode>,
        edges: Vec<RelationTriple>,
        root: usize,
    ) -> Self {
        Self { nodes, edges, root }
    }

    pub fn nodes(&self) -> &[AmrNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[RelationTriple] {
        &self.edges
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn concepts(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().map(|n| n.concept.as_str())
    }

    pub(crate) fn into_parts(self) -> (Vec<AmrNode>, Vec<RelationTriple>, usize) {
        (self.nodes, self.edges, self.root)
    }

    /// Indices of the edges touching each node, in stored edge order.
    pub(crate) fn incidence(&self) -> Vec<Vec<usize>> {
        let mut inc = vec![Vec::new(); self.nodes.len()];
        for (e, edge) in self.edges.iter().enumerate() {
            inc[edge.source].push(e);
            if edge.target != edge.source {
                inc[edge.target].push(e);
            }
        }
        inc
    }

    pub fn validate(&self) -> Result<(), AmrError> {
        let bad = |msg: String| Err(AmrError::InvariantViolation(msg));
        let n = self.nodes.len();
        if n == 0 {
            return bad("graph has no nodes".into());
        }
        if self.root >= n {
            return bad(format!("root {} out of range for {n} nodes", self.root));
        }
        if self.nodes[self.root].is_constant {
            return bad("root is a constant".into());
        }

        let mut vars = HashSet::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if node.concept.is_empty() {
                return bad(format!("node {i} has an empty concept"));
            }
            match (&node.variable, node.is_constant) {
                (Some(_), true) => return bad(format!("constant node {i} carries a variable")),
                (Some(v), false) if !vars.insert(v.as_str()) => {
                    return bad(format!("variable {v} is not unique"))
                }
                _ => {}
            }
        }

        let mut seen = HashSet::new();
        let mut in_degree = vec![0usize; n];
        let mut out_degree = vec![0usize; n];
        for edge in &self.edges {
            if edge.source >= n || edge.target >= n {
                return bad(format!("edge {edge:?} has an index out of range"));
            }
            if edge.label.len() < 2
                || !edge.label.starts_with(':')
                || edge.label.chars().any(|c| c.is_whitespace() || c == '(' || c == ')')
            {
                return bad(format!("malformed relation label {:?}", edge.label));
            }
            if inverse_base(&edge.label).is_some() {
                return bad(format!(
                    "relation {} is stored in inverse form",
                    edge.label
                ));
            }
            if edge.source == edge.target {
                return bad(format!("self relation on node {}", edge.source));
            }
            if !seen.insert((edge.source, edge.label.as_str(), edge.target)) {
                return bad(format!("duplicate triple {edge:?}"));
            }
            out_degree[edge.source] += 1;
            in_degree[edge.target] += 1;
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.is_constant && (out_degree[i] != 0 || in_degree[i] != 1) {
                return bad(format!(
                    "constant node {i} must have exactly one incoming and no outgoing edges"
                ));
            }
        }

        // connectivity, ignoring direction
        let inc = self.incidence();
        let mut reached = vec![false; n];
        let mut stack = vec![self.root];
        reached[self.root] = true;
        while let Some(u) = stack.pop() {
            for &e in &inc[u] {
                let edge = &self.edges[e];
                let v = if edge.source == u { edge.target } else { edge.source };
                if !reached[v] {
                    reached[v] = true;
                    stack.push(v);
                }
            }
        }
        if let Some(i) = reached.iter().position(|r| !r) {
            return bad(format!("node {i} is not connected to the root"));
        }
        Ok(())
    }

    /// Structural equality up to renaming of nodes: same root concept, same
    /// concept multiset, and an edge-preserving bijection between nodes.
    /// Variable names are ignored.
    pub fn is_isomorphic(&self, other: &AmrGraph) -> bool {
        if self.nodes.len() != other.nodes.len() || self.edges.len() != other.edges.len() {
            return false;
        }
        let key = |n: &AmrNode| (n.concept.clone(), n.is_constant);
        let mut counts: BTreeMap<(String, bool), isize> = BTreeMap::new();
        for n in &self.nodes {
            *counts.entry(key(n)).or_default() += 1;
        }
        for n in &other.nodes {
            *counts.entry(key(n)).or_default() -= 1;
        }
        if counts.values().any(|&c| c != 0) {
            return false;
        }

        let labels_between = |g: &AmrGraph| {
            let mut map: LabelMap = BTreeMap::new();
            for e in &g.edges {
                map.entry((e.source, e.target)).or_default().push(e.label.clone());
            }
            for labels in map.values_mut() {
                labels.sort_unstable();
            }
            map
        };
        let lhs_labels = labels_between(self);
        let rhs_labels = labels_between(other);
        let degree = |g: &AmrGraph| {
            let mut d = vec![(0usize, 0usize); g.nodes.len()];
            for e in &g.edges {
                d[e.source].0 += 1;
                d[e.target].1 += 1;
            }
            d
        };
        let lhs_deg = degree(self);
        let rhs_deg = degree(other);

        // visit order: BFS from the root so each new node is adjacent to a mapped one
        let inc = self.incidence();
        let mut order = vec![self.root];
        let mut queued = vec![false; self.nodes.len()];
        queued[self.root] = true;
        let mut head = 0;
        while head < order.len() {
            let u = order[head];
            head += 1;
            for &e in &inc[u] {
                let edge = &self.edges[e];
                let v = if edge.source == u { edge.target } else { edge.source };
                if !queued[v] {
                    queued[v] = true;
                    order.push(v);
                }
            }
        }

        let ctx = IsoContext {
            lhs: self,
            rhs: other,
            lhs_labels: &lhs_labels,
            rhs_labels: &rhs_labels,
            lhs_deg: &lhs_deg,
            rhs_deg: &rhs_deg,
            order: &order,
        };
        let mut forward = vec![usize::MAX; self.nodes.len()];
        let mut used = vec![false; other.nodes.len()];
        ctx.extend(0, &mut forward, &mut used)
    }
}

type LabelMap = BTreeMap<(usize, usize), Vec<String>>;

struct IsoContext<'a> {
    lhs: &'a AmrGraph,
    rhs: &'a AmrGraph,
    lhs_labels: &'a LabelMap,
    rhs_labels: &'a LabelMap,
    lhs_deg: &'a [(usize, usize)],
    rhs_deg: &'a [(usize, usize)],
    order: &'a [usize],
}

impl IsoContext<'_> {
    fn compatible(&self, u: usize, u2: usize, forward: &[usize]) -> bool {
        let (a, b) = (&self.lhs.nodes[u], &self.rhs.nodes[u2]);
        if a.concept != b.concept || a.is_constant != b.is_constant {
            return false;
        }
        if self.lhs_deg[u] != self.rhs_deg[u2] {
            return false;
        }
        if (u == self.lhs.root) != (u2 == self.rhs.root) {
            return false;
        }
        fn get(m: &LabelMap, k: (usize, usize)) -> &[String] {
            m.get(&k).map_or(&[], Vec::as_slice)
        }
        for (v, &v2) in forward.iter().enumerate() {
            if v2 == usize::MAX && v != u {
                continue;
            }
            let v2 = if v == u { u2 } else { v2 };
            if get(self.lhs_labels, (u, v)) != get(self.rhs_labels, (u2, v2))
                || get(self.lhs_labels, (v, u)) != get(self.rhs_labels, (v2, u2))
            {
                return false;
            }
        }
        true
    }

    fn extend(&self, depth: usize, forward: &mut Vec<usize>, used: &mut Vec<bool>) -> bool {
        let Some(&u) = self.order.get(depth) else {
            return true;
        };
        for u2 in 0..self.rhs.nodes.len() {
            if used[u2] || !self.compatible(u, u2, forward) {
                continue;
            }
            forward[u] = u2;
            used[u2] = true;
            if self.extend(depth + 1, forward, used) {
                return true;
            }
            forward[u] = usize::MAX;
            used[u2] = false;
        }
        false
    }
}

/// Canonical variable names: the first letter of the concept (or `x`), with a
/// numeric suffix from the second occurrence on (`d`, `d2`, `d3`, ...).
pub fn canonical_variables(nodes: &[AmrNode]) -> Vec<Option<String>> {
    let mut counts: BTreeMap<char, usize> = BTreeMap::new();
    nodes
        .iter()
        .map(|node| {
            if node.is_constant {
                return None;
            }
            let base = node
                .concept
                .chars()
                .next()
                .filter(|c| c.is_ascii_alphabetic())
                .map(|c| c.to_ascii_lowercase())
                .unwrap_or('x');
            let count = counts.entry(base).or_insert(0);
            *count += 1;
            Some(if *count == 1 {
                base.to_string()
            } else {
                format!("{base}{count}")
            })
        })
        .collect()
}
