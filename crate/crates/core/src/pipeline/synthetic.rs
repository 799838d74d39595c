//! Small generated datasets.

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::dataset::{DialogueRecord, TrainingExample, Turn};
use crate::amr::RelationIndexMatrix;
use crate::model::{EncoderConfig, ModelConfig, ModelInput};
use crate::numerics::rng;

pub const AGENTS: [&str; 10] = [
    "doctor", "nurse", "patient", "mother", "father", "surgeon", "pharmacist", "child", "therapist",
    "dentist",
];
pub const ACTIONS: [&str; 3] = ["call-01", "help-01", "see-01"];

/// Records whose response is the `:ARG0` concept of the root. The context is
/// the same for every record and `:ARG1` holds a different noun from the same
/// pool, so only the graph structure identifies the answer. Every
/// (action, agent, patient) combination appears once, in seeded order.
pub fn arg0_task(seed: u64) -> Vec<DialogueRecord> {
    let mut rng = rng::seeded(seed, 2);
    let mut combos = Vec::new();
    for action in ACTIONS {
        for a in AGENTS {
            for b in AGENTS.iter().filter(|&&b| b != a) {
                combos.push((action, a, *b));
            }
        }
    }
    combos.shuffle(&mut rng);
    combos
        .into_iter()
        .enumerate()
        .map(|(i, (action, a, b))| {
            let arg0 = format!(":ARG0 (a / {a})");
            let arg1 = format!(":ARG1 (b / {b})");
            let (first, second) = if rng.gen::<bool>() { (arg0, arg1) } else { (arg1, arg0) };
            DialogueRecord {
                id: format!("arg0-{i:03}"),
                turns: vec![Turn {
                    speaker: "patient".into(),
                    text: "who is it ?".into(),
                }],
                response: a.to_string(),
                amr: vec![format!("(v / {action} {first} {second})")],
            }
        })
        .collect()
}

/// A random model input with `context_len` tokens and a connected
/// `nodes`-node graph, plus a response, over `vocab_size` tokens.
pub fn random_example(
    seed: u64,
    vocab_size: usize,
    relation_count: usize,
    context_len: usize,
    nodes: usize,
    response_len: usize,
) -> TrainingExample {
    let mut rng = rng::seeded(seed, 3);
    let token = |rng: &mut rng::Rng| rng.gen_range(4..vocab_size);
    let context = (0..context_len).map(|_| token(&mut rng)).collect();
    let node_ids = (0..nodes).map(|_| token(&mut rng)).collect();
    let response = (0..response_len).map(|_| token(&mut rng)).collect();
    let labels = (relation_count - 3) / 2;
    let mut ids = vec![1; nodes * nodes];
    for i in 0..nodes {
        ids[i * nodes + i] = 0;
    }
    for child in 1..nodes {
        let parent = rng.gen_range(0..child);
        let label = rng.gen_range(0..labels.max(1));
        ids[parent * nodes + child] = 3 + 2 * label;
        ids[child * nodes + parent] = 4 + 2 * label;
    }
    TrainingExample {
        input: ModelInput {
            context,
            nodes: node_ids,
            relations: RelationIndexMatrix::from_ids(nodes, ids),
        },
        response,
    }
}

/// Model and example used by the gradient check: 5 context tokens, a 4-node
/// graph and a 3-token response.
pub fn gradcheck_case(encoder: EncoderConfig, vocab_size: usize, seed: u64) -> (ModelConfig, TrainingExample) {
    let relation_count = 7;
    let cfg = ModelConfig::new(encoder, vocab_size, relation_count);
    (cfg, random_example(seed, vocab_size, relation_count, 5, 4, 3))
}
