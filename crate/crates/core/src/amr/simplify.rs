use serde::{Deserialize, Serialize};

use super::graph::AmrGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimplifyConfig {
    /// Remove `-NN` frame sense suffixes (`want-01` becomes `want`).
    pub strip_sense_tags: bool,
    /// Remove `:wiki` edges pointing at constants, and those constants.
    pub drop_wiki_edges: bool,
}

impl Default for SimplifyConfig {
    fn default() -> Self {
        Self {
            strip_sense_tags: true,
            drop_wiki_edges: true,
        }
    }
}

/// `want-01` -> `want`; only a trailing hyphen plus exactly two digits.
pub fn strip_sense_tag(concept: &str) -> &str {
    let b = concept.as_bytes();
    let n = b.len();
    if n > 3 && b[n - 3] == b'-' && b[n - 2].is_ascii_digit() && b[n - 1].is_ascii_digit() {
        &concept[..n - 3]
    } else {
        concept
    }
}

pub fn simplify(graph: &AmrGraph, config: SimplifyConfig) -> AmrGraph {
    let (mut nodes, mut edges, root) = graph.clone().into_parts();
    if config.strip_sense_tags {
        for node in nodes.iter_mut().filter(|n| !n.is_constant) {
            let stripped = strip_sense_tag(&node.concept).len();
            node.concept.truncate(stripped);
        }
    }
    if config.drop_wiki_edges {
        let mut removed = vec![false; nodes.len()];
        edges.retain(|e| {
            let drop = e.label == ":wiki" && nodes[e.target].is_constant;
            if drop {
                removed[e.target] = true;
            }
            !drop
        });
        if removed.iter().any(|&r| r) {
            let mut remap = vec![usize::MAX; nodes.len()];
            let mut next = 0;
            for (i, slot) in remap.iter_mut().enumerate() {
                if !removed[i] {
                    *slot = next;
                    next += 1;
                }
            }
            let mut i = 0;
            nodes.retain(|_| {
                let keep = !removed[i];
                i += 1;
                keep
            });
            for e in &mut edges {
                e.source = remap[e.source];
                e.target = remap[e.target];
            }
            let graph = AmrGraph::from_parts_unchecked(nodes, edges, remap[root]);
            debug_assert!(graph.validate().is_ok());
            return graph;
        }
    }
    AmrGraph::from_parts_unchecked(nodes, edges, root)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amr::parse_penman;

    const OFF: SimplifyConfig = SimplifyConfig {
        strip_sense_tags: false,
        drop_wiki_edges: false,
    };

    #[test]
    fn sense_tags() {
        assert_eq!(strip_sense_tag("want-01"), "want");
        assert_eq!(strip_sense_tag("have-rel-role-91"), "have-rel-role");
        assert_eq!(strip_sense_tag("go-2"), "go-2");
        assert_eq!(strip_sense_tag("-01"), "-01");
        assert_eq!(strip_sense_tag("dog"), "dog");
    }

    #[test]
    fn strip_on_and_off() {
        let g = parse_penman("(w / want-01 :ARG0 (b / boy))").unwrap();
        let s = simplify(&g, SimplifyConfig::default());
        assert_eq!(s.nodes()[0].concept, "want");
        assert_eq!(simplify(&g, OFF), g);
    }

    #[test]
    fn constants_keep_digit_suffixes() {
        let g = parse_penman(r#"(d / date-entity :ymd "2020-01")"#).unwrap();
        let s = simplify(&g, SimplifyConfig::default());
        assert_eq!(s.nodes()[1].concept, "2020-01");
    }

    #[test]
    fn wiki_edges_dropped() {
        let g = parse_penman(
            r#"(p / person :wiki "Barack_Obama" :name (n / name :op1 "Barack") :ARG0-of (s / speak-01))"#,
        )
        .unwrap();
        let s = simplify(&g, SimplifyConfig::default());
        assert_eq!(s.node_count(), g.node_count() - 1);
        assert!(s.edges().iter().all(|e| e.label != ":wiki"));
        assert!(s.validate().is_ok());
        assert_eq!(s.nodes()[s.root()].concept, "person");
        assert_eq!(simplify(&s, SimplifyConfig::default()), s);
    }
}
