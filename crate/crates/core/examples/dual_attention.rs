//! One dual-attention step: the decoder state attends to text and graph
//! encodings separately and fuses the two contexts.
//!
//! ```text
//! cargo run --example dual_attention
//! ```

use amrdia::amr::RelationIndexMatrix;
use amrdia::decoder::dual_attention_step;
use amrdia::encoders::encode;
use amrdia::model::{EncoderConfig, ModelConfig, ModelInput, Session};
use amrdia::numerics::{Tape, Tensor};

fn main() {
    let enc = EncoderConfig {
        d_model: 4,
        n_heads: 1,
        n_layers: 1,
        ffn_dim: 8,
        max_seq_len: 16,
        dropout_rate: 0.0,
    };
    let cfg = ModelConfig::new(enc, 10, 5);
    let params = cfg.init_params(0).unwrap();
    let input = ModelInput {
        context: vec![4, 5, 6],
        nodes: vec![7, 8],
        relations: RelationIndexMatrix::from_ids(2, vec![0, 3, 4, 0]),
    };
    let mut tape = Tape::new();
    let mut s = Session::new(&mut tape, &params, &cfg);
    let (text, graph) = encode(&mut s, &input).unwrap();
    let d = s.tape.constant(&Tensor::from_rows(&[[0.5, -0.2, 0.1, 0.3]]).unwrap());
    let ctx = dual_attention_step(&mut s, d, &text, &graph, 0).unwrap();

    for m in tape.attention_maps() {
        println!("{:<12} {:?}", m.label, m.weights.iter().map(|w| format!("{w:.3}")).collect::<Vec<_>>());
    }
    println!("text context   {:?}", tape.value(ctx.text));
    println!("graph context  {:?}", tape.value(ctx.graph));
    println!("fused          {:?}", tape.value(ctx.fused));
}
