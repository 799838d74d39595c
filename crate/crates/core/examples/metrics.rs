//! Score a few candidates and print the report table.
//!
//! ```text
//! cargo run --example metrics
//! ```

use amrdia::metrics::{modified_precision, render_table, ScoreReport};
use amrdia::pipeline::tokenize;

fn main() {
    let refs = ["Rest and drink plenty of water.", "Please see a doctor today.", "Take it after meals."];
    let good = ["Rest and drink water.", "Please see a doctor today.", "Take it after meals."];
    let bad = ["I do not know.", "I do not know.", "Take it."];
    let tok = |xs: &[&str]| xs.iter().map(|s| tokenize(s)).collect::<Vec<_>>();
    let r = tok(&refs);
    let reports = [
        ScoreReport::compute("close", &tok(&good), &r).unwrap(),
        ScoreReport::compute("generic", &tok(&bad), &r).unwrap(),
    ];
    print!("{}", render_table(&reports));

    let c = [tokenize("the the the the the the the")];
    let r = [tokenize("the cat is on the mat")];
    let (m, t) = modified_precision(&c, &r, 1).unwrap();
    println!("clipped unigram precision: {m}/{t}");
}
