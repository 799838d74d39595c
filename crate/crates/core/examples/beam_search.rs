//! Greedy and beam decoding from the same partly trained model.
//!
//! ```text
//! cargo run --release --example beam_search
//! ```

use amrdia::decoder::{generate, DecodingConfig};
use amrdia::pipeline::{build_relation_vocab, build_vocab, encode_example, ingest_dialogues, AppConfig};
use amrdia::training::{train, Checkpoint, TrainState};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mut cfg = AppConfig::load(&root.join("overfit.toml"))?;
    cfg.train.max_steps = Some(60);
    let data = ingest_dialogues(&root.join("overfit.jsonl"), cfg.data.simplify)?;
    let vocab = build_vocab(&data.examples, 1)?;
    let relations = build_relation_vocab(&data.examples);
    let model = cfg.model_config(vocab.len(), relations.len());
    let examples: Vec<_> = data
        .examples
        .iter()
        .map(|ex| encode_example(ex, &vocab, &relations, model.encoder.max_seq_len))
        .collect();
    let mut ck = Checkpoint {
        state: TrainState::new(&model, &cfg.train)?,
        model,
        train: cfg.train.clone(),
        vocab,
        relations,
    };
    train(&mut ck, &examples, None)?;

    let greedy = DecodingConfig::greedy(20);
    let beam = DecodingConfig::beam(4, 20);
    for (ex, raw) in examples.iter().zip(&data.examples).take(3) {
        println!("{}  gold:   {}", raw.id, raw.response_tokens().join(" "));
        for (name, d) in [("greedy", &greedy), ("beam", &beam)] {
            let h = generate(&ck.state.params, &ck.model, ck.train.ablation, &ex.input, d)?;
            println!(
                "     {name:<7} {}  (log p {:.3}, score {:.3})",
                ck.vocab.detokenize(&h.tokens),
                h.log_prob,
                h.score(d.length_penalty)
            );
        }
    }
    Ok(())
}
