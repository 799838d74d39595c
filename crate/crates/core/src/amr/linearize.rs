use super::graph::AmrGraph;
use super::traverse::{walk, Visit};

/// Flattens a graph into a variable-free token sequence.
///
/// Each node contributes its concept. Every edge contributes its role token
/// followed by the neighbour; a neighbour that is expanded here and writes at
/// least one edge of its own is wrapped in `(` `)`. Reentrant neighbours
/// contribute their concept only.
pub fn linearize(graph: &AmrGraph) -> Vec<String> {
    // Each frame buffers a node's tokens until we know whether it needs parens.
    let mut frames: Vec<Vec<String>> = vec![Vec::new()];
    let nodes = graph.nodes();
    walk(graph, |visit| match visit {
        Visit::Enter(i) => frames.push(vec![nodes[i].concept.clone()]),
        Visit::Role(label) => frames
            .last_mut()
            .expect("frame")
            .push(label.into_owned()),
        Visit::Leaf(i) => frames
            .last_mut()
            .expect("frame")
            .push(nodes[i].concept.clone()),
        Visit::Leave { emitted, .. } => {
            let body = frames.pop().expect("frame");
            let parent = frames.last_mut().expect("frame");
            // the bottom frame is empty until it receives the root, which is never wrapped
            if !parent.is_empty() && emitted > 0 {
                parent.push("(".into());
                parent.extend(body);
                parent.push(")".into());
            } else {
                parent.extend(body);
            }
        }
    });
    frames.pop().unwrap_or_default()
}
