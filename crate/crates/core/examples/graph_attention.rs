//! Relation-aware attention weights of a graph layer next to the same layer
//! with its relation embeddings zeroed.
//!
//! ```text
//! cargo run --example graph_attention
//! ```

use amrdia::amr::{parse_penman, relation_matrix, RelationVocab};
use amrdia::encoders::graph_attention_scores;
use amrdia::model::{EncoderConfig, ModelConfig, Session};
use amrdia::numerics::Tape;

fn show(title: &str, weights: &[f64], m: usize) {
    println!("{title}");
    for row in weights.chunks(m) {
        println!("  {}", row.iter().map(|w| format!("{w:.3}")).collect::<Vec<_>>().join("  "));
    }
}

fn main() {
    let g = parse_penman("(w / want-01 :ARG0 (b / boy) :ARG1 (g / go-02 :ARG0 b))").unwrap();
    let rv = RelationVocab::from_graphs([&g]);
    let rel = relation_matrix(&g, &rv);
    let enc = EncoderConfig {
        d_model: 8,
        n_heads: 1,
        n_layers: 1,
        ffn_dim: 16,
        max_seq_len: 16,
        dropout_rate: 0.0,
    };
    let cfg = ModelConfig::new(enc, 8, rv.len());
    let mut params = cfg.init_params(3).unwrap();
    let nodes = [4, 5, 6];

    for zeroed in [false, true] {
        if zeroed {
            params.get_mut("graph.0.rel_key").unwrap().data_mut().fill(0.0);
        }
        let mut tape = Tape::new();
        let mut s = Session::new(&mut tape, &params, &cfg);
        let table = s.param("embed.tokens").unwrap();
        let x = s.tape.embedding(table, &nodes).unwrap();
        let alpha = graph_attention_scores(&mut s, x, &rel, 0).unwrap();
        let title = if zeroed { "relations zeroed" } else { "with relations" };
        show(title, tape.value(alpha[0]), nodes.len());
    }
}
