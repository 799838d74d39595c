//! Train the full model and the `no_amr` ablation on a task whose answer is
//! only in the graph: the response is the `:ARG0` concept of the root.
//!
//! ```text
//! cargo run --release --example ablation
//! ```

use std::collections::HashMap;

use amrdia::decoder::{generate, DecodingConfig};
use amrdia::model::{Ablation, EncoderConfig};
use amrdia::pipeline::synthetic::arg0_task;
use amrdia::pipeline::{build_relation_vocab, build_vocab, encode_example, ingest_str, AppConfig, TrainingExample};
use amrdia::training::{train, Checkpoint, TrainConfig, TrainState};

fn accuracy(ck: &Checkpoint, data: &[TrainingExample]) -> f64 {
    let dcfg = DecodingConfig::greedy(4);
    let mut hits = 0;
    let mut total = 0;
    for ex in data {
        let hyp = generate(&ck.state.params, &ck.model, ck.train.ablation, &ex.input, &dcfg).unwrap();
        for (i, &t) in ex.response.iter().enumerate() {
            total += 1;
            hits += usize::from(hyp.tokens.get(i) == Some(&t));
        }
    }
    hits as f64 / total as f64
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let records = arg0_task(0);
    let text: String = records.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect();
    let data = ingest_str(&text, Default::default())?;
    let vocab = build_vocab(&data.examples, 1)?;
    let relations = build_relation_vocab(&data.examples);
    let cfg = AppConfig {
        encoder: EncoderConfig {
            d_model: 32,
            n_heads: 2,
            n_layers: 1,
            ffn_dim: 64,
            max_seq_len: 16,
            dropout_rate: 0.0,
        },
        ..Default::default()
    };
    let model = cfg.model_config(vocab.len(), relations.len());
    let encoded: Vec<_> = data
        .examples
        .iter()
        .map(|ex| encode_example(ex, &vocab, &relations, 16))
        .collect();
    let (train_set, test_set) = encoded.split_at(216);

    let mut counts = HashMap::new();
    for ex in train_set {
        *counts.entry(ex.response[0]).or_insert(0) += 1;
    }
    let majority = *counts.iter().max_by_key(|(t, c)| (**c, std::cmp::Reverse(**t))).unwrap().0;
    let baseline = test_set.iter().filter(|e| e.response[0] == majority).count() as f64 / test_set.len() as f64;
    println!("majority baseline {:.1}%", 100.0 * baseline);

    for ablation in [Ablation::None, Ablation::NoAmr] {
        let tcfg = TrainConfig {
            batch_size: 16,
            learning_rate: 3e-3,
            max_epochs: 30,
            seed: 1,
            ablation,
            ..Default::default()
        };
        let mut ck = Checkpoint {
            state: TrainState::new(&model, &tcfg)?,
            model: model.clone(),
            train: tcfg,
            vocab: vocab.clone(),
            relations: relations.clone(),
        };
        let t = std::time::Instant::now();
        train(&mut ck, train_set, None)?;
        println!(
            "{ablation:>7}: final loss {:.4}  held-out accuracy {:.1}%  ({:.1?})",
            ck.state.loss_log.last().unwrap(),
            100.0 * accuracy(&ck, test_set),
            t.elapsed()
        );
    }
    Ok(())
}
