//! Print the relation index matrix of a small graph with its label names.
//!
//! ```text
//! cargo run --example relation_matrix
//! ```

use amrdia::amr::{parse_penman, relation_matrix, RelationVocab};

fn main() {
    let g = parse_penman("(w / want-01 :ARG0 (b / boy) :ARG1 (g / go-02 :ARG0 b))").unwrap();
    let rv = RelationVocab::from_graphs([&g]);
    let m = relation_matrix(&g, &rv);
    let names: Vec<&str> = g.concepts().collect();
    print!("{:>10}", "");
    for n in &names {
        print!("{n:>12}");
    }
    println!();
    for (i, n) in names.iter().enumerate() {
        print!("{n:>10}");
        for j in 0..names.len() {
            print!("{:>12}", rv.name(m.get(i, j)).unwrap_or_default());
        }
        println!();
    }
    println!("{} relation ids", rv.len());
}
