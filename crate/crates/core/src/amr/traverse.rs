use std::borrow::Cow;

use super::graph::{inverse_label, AmrGraph};

/// One step of the depth-first walk shared by the serializer and linearizer.
pub(crate) enum Visit<'g> {
    /// Entering a node for the first time (its edges follow).
    Enter(usize),
    /// Relation label as written from the current node (inverse spelling when
    /// the stored edge points at the current node), followed by the neighbour.
    Role(Cow<'g, str>),
    /// Neighbour already expanded (reentrancy) or a constant.
    Leaf(usize),
    /// Leaving a node; `emitted` counts the edges written inside it.
    Leave { emitted: usize },
}

/// Walks the graph from the root, writing every stored edge exactly once, in
/// stored order per node.
///
/// Outgoing edges are written at their source. An edge whose source cannot be
/// reached from the root along edge direction is written in inverse form at
/// whichever endpoint is expanded first, so every node is covered.
pub(crate) fn walk<'g>(graph: &'g AmrGraph, mut sink: impl FnMut(Visit<'g>)) {
    let inc = graph.incidence();
    let mut forward_reachable = vec![false; graph.node_count()];
    let mut stack = vec![graph.root()];
    forward_reachable[graph.root()] = true;
    while let Some(u) = stack.pop() {
        for &e in &inc[u] {
            let edge = &graph.edges()[e];
            if edge.source == u && !forward_reachable[edge.target] {
                forward_reachable[edge.target] = true;
                stack.push(edge.target);
            }
        }
    }
    let mut state = WalkState {
        inc,
        forward_reachable,
        visited: vec![false; graph.node_count()],
        emitted: vec![false; graph.edge_count()],
    };
    expand(graph, &mut state, graph.root(), &mut sink);
}

struct WalkState {
    inc: Vec<Vec<usize>>,
    forward_reachable: Vec<bool>,
    visited: Vec<bool>,
    emitted: Vec<bool>,
}

fn expand<'g>(
    graph: &'g AmrGraph,
    st: &mut WalkState,
    node: usize,
    sink: &mut impl FnMut(Visit<'g>),
) {
    st.visited[node] = true;
    sink(Visit::Enter(node));
    let mut count = 0;
    for k in 0..st.inc[node].len() {
        let e = st.inc[node][k];
        let edge = &graph.edges()[e];
        let outgoing = edge.source == node;
        if st.emitted[e] || (!outgoing && st.forward_reachable[edge.source]) {
            continue;
        }
        st.emitted[e] = true;
        count += 1;
        let (label, other) = if outgoing {
            (Cow::Borrowed(edge.label.as_str()), edge.target)
        } else {
            (Cow::Owned(inverse_label(&edge.label)), edge.source)
        };
        sink(Visit::Role(label));
        if st.visited[other] || graph.nodes()[other].is_constant {
            st.visited[other] = true;
            sink(Visit::Leaf(other));
        } else {
            expand(graph, st, other, sink);
        }
    }
    sink(Visit::Leave { emitted: count });
}
