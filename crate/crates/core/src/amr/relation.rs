use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::graph::{inverse_label, AmrGraph};

/// Relation id vocabulary for the graph encoder.
///
/// Ids 0..=2 are reserved for the self relation, "no direct edge" and unseen
/// labels. Every known label then takes two consecutive ids: forward, then
/// reverse.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationVocab {
    labels: Vec<String>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

impl RelationVocab {
    pub const SELF: usize = 0;
    pub const NONE: usize = 1;
    pub const UNK: usize = 2;
    const RESERVED: usize = 3;

    /// Builds from any label stream; duplicates are ignored and labels sorted.
    pub fn new<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut sorted: Vec<String> = labels.into_iter().map(|s| s.as_ref().to_string()).collect();
        sorted.sort();
        sorted.dedup();
        Self::from_labels(sorted)
    }

    pub fn from_graphs<'a>(graphs: impl IntoIterator<Item = &'a AmrGraph>) -> Self {
        Self::new(
            graphs
                .into_iter()
                .flat_map(|g| g.edges().iter().map(|e| e.label.clone())),
        )
    }

    fn from_labels(labels: Vec<String>) -> Self {
        let index = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        Self { labels, index }
    }

    /// Restores the lookup index after deserialization.
    pub fn reindexed(self) -> Self {
        Self::from_labels(self.labels)
    }

    pub fn len(&self) -> usize {
        Self::RESERVED + 2 * self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn id(&self, label: &str) -> usize {
        self.index
            .get(label)
            .map_or(Self::UNK, |&i| Self::RESERVED + 2 * i)
    }

    pub fn reverse_id(&self, label: &str) -> usize {
        self.index
            .get(label)
            .map_or(Self::UNK, |&i| Self::RESERVED + 2 * i + 1)
    }

    pub fn name(&self, id: usize) -> Option<String> {
        match id {
            Self::SELF => Some("<self>".into()),
            Self::NONE => Some("<none>".into()),
            Self::UNK => Some("<unk-rel>".into()),
            _ => {
                let k = id - Self::RESERVED;
                let label = self.labels.get(k / 2)?;
                Some(if k % 2 == 0 {
                    label.clone()
                } else {
                    inverse_label(label)
                })
            }
        }
    }
}

/// Dense M×M relation ids, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationIndexMatrix {
    size: usize,
    ids: Vec<usize>,
}

impl RelationIndexMatrix {
    pub fn from_ids(size: usize, ids: Vec<usize>) -> Self {
        assert_eq!(ids.len(), size * size, "relation matrix must be square");
        Self { size, ids }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> usize {
        self.ids[i * self.size + j]
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn max_id(&self) -> usize {
        self.ids.iter().copied().max().unwrap_or(0)
    }

    /// Reorders nodes: row/column `i` of the result is row/column `perm[i]` of self.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let m = self.size;
        let mut ids = vec![0; m * m];
        for i in 0..m {
            for j in 0..m {
                ids[i * m + j] = self.get(perm[i], perm[j]);
            }
        }
        Self { size: m, ids }
    }
}

pub fn relation_matrix(graph: &AmrGraph, rv: &RelationVocab) -> RelationIndexMatrix {
    let m = graph.node_count();
    let mut ids = vec![RelationVocab::NONE; m * m];
    for i in 0..m {
        ids[i * m + i] = RelationVocab::SELF;
    }
    let mut set = vec![false; m * m];
    for e in graph.edges() {
        let (s, t) = (e.source, e.target);
        if !set[s * m + t] {
            set[s * m + t] = true;
            ids[s * m + t] = rv.id(&e.label);
        }
        if !set[t * m + s] {
            set[t * m + s] = true;
            ids[t * m + s] = rv.reverse_id(&e.label);
        }
    }
    RelationIndexMatrix { size: m, ids }
}
