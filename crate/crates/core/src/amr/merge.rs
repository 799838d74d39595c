use super::graph::{canonical_variables, AmrGraph, AmrNode, RelationTriple};
use super::AmrError;

pub const MULTI_SENTENCE: &str = "multi-sentence";

/// Joins per-sentence graphs under a fresh `multi-sentence` root with
/// `:snt1`, `:snt2`, ... edges. A single graph is returned unchanged.
/// Duplicate concepts across sentences stay separate nodes.
pub fn merge_graphs(graphs: &[AmrGraph]) -> Result<AmrGraph, AmrError> {
    match graphs {
        [] => Err(AmrError::EmptyInput),
        [single] => Ok(single.clone()),
        many => {
            let mut nodes = vec![AmrNode::concept("m", MULTI_SENTENCE)];
            let mut edges = Vec::new();
            for (k, g) in many.iter().enumerate() {
                let base = nodes.len();
                nodes.extend(g.nodes().iter().cloned());
                edges.push(RelationTriple::new(0, format!(":snt{}", k + 1), base + g.root()));
                edges.extend(g.edges().iter().map(|e| {
                    RelationTriple::new(base + e.source, e.label.clone(), base + e.target)
                }));
            }
            let vars = canonical_variables(&nodes);
            for (node, var) in nodes.iter_mut().zip(vars) {
                node.variable = var;
            }
            AmrGraph::new(nodes, edges, 0)
        }
    }
}
