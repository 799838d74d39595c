//! Train briefly, save a checkpoint, load it back and resume.
//!
//! ```text
//! cargo run --release --example checkpoint
//! ```

use amrdia::pipeline::{build_relation_vocab, build_vocab, encode_example, ingest_dialogues, AppConfig};
use amrdia::training::{load_checkpoint, save_checkpoint, train, Checkpoint, TrainState};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mut cfg = AppConfig::load(&root.join("overfit.toml"))?;
    cfg.train.max_steps = None;
    cfg.train.max_epochs = 5;
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

    let dir = std::env::temp_dir().join("amrdia-checkpoint-example");
    let path = dir.join("epoch-005.ckpt");
    std::fs::create_dir_all(&dir)?;
    save_checkpoint(&ck, &path)?;
    println!("wrote {} ({} bytes)", path.display(), std::fs::metadata(&path)?.len());

    let mut resumed = load_checkpoint(&path)?;
    assert_eq!(resumed, ck);
    resumed.train.max_epochs = 10;
    train(&mut resumed, &examples, None)?;
    for (i, l) in resumed.state.loss_log.iter().enumerate() {
        println!("epoch {:>2}  loss {l:.4}", i + 1);
    }
    Ok(())
}
