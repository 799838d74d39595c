//! Memorize the bundled 8-dialogue fixture and decode it back.
//!
//! ```text
//! cargo run --release --example overfit
//! ```

use std::path::Path;
use std::time::Instant;

use amrdia::decoder::generate;
use amrdia::metrics::bleu;
use amrdia::pipeline::{build_relation_vocab, build_vocab, encode_example, ingest_dialogues, AppConfig};
use amrdia::training::{evaluate_loss, train, Checkpoint, TrainState};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let cfg = AppConfig::load(&root.join("overfit.toml"))?;
    let data = ingest_dialogues(&root.join("overfit.jsonl"), cfg.data.simplify)?;
    let vocab = build_vocab(&data.examples, cfg.data.min_freq)?;
    let relations = build_relation_vocab(&data.examples);
    let model = cfg.model_config(vocab.len(), relations.len());
    let examples: Vec<_> = data
        .examples
        .iter()
        .map(|ex| encode_example(ex, &vocab, &relations, model.encoder.max_seq_len))
        .collect();
    println!("vocab {}  relations {}  params {}", vocab.len(), relations.len(), {
        let p = model.init_params(0)?;
        p.num_scalars()
    });

    let start = Instant::now();
    let mut ckpt = Checkpoint {
        state: TrainState::new(&model, &cfg.train)?,
        model,
        train: cfg.train.clone(),
        vocab,
        relations,
    };
    train(&mut ckpt, &examples, None)?;
    for (i, l) in ckpt.state.loss_log.iter().enumerate().filter(|(i, _)| i % 100 == 99) {
        println!("epoch {:>4}  loss {l:.5}", i + 1);
    }
    let loss = evaluate_loss(&ckpt.state.params, &ckpt.model, ckpt.train.ablation, &examples)?;
    println!("{} steps in {:.1?}, final loss {loss:.6}", ckpt.state.step, start.elapsed());

    let mut cands = Vec::new();
    let mut refs = Vec::new();
    for (ex, raw) in examples.iter().zip(&data.examples) {
        let hyp = generate(&ckpt.state.params, &ckpt.model, ckpt.train.ablation, &ex.input, &cfg.decoding)?;
        let out = ckpt.vocab.decode(&hyp.tokens);
        let mark = if hyp.tokens == ex.response { "ok " } else { "BAD" };
        println!("{mark} {}: {}", raw.id, out.join(" "));
        cands.push(out);
        refs.push(raw.response_tokens());
    }
    println!("BLEU-4 {:.4}", bleu(&cands, &refs, 4)?[3]);
    Ok(())
}
