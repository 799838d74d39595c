//! Parse, simplify, serialize and linearize a PENMAN graph.
//!
//! ```text
//! cargo run --example parse_penman -- '(w / want-01 :ARG0 (b / boy) :ARG1 (g / go-02 :ARG0 b))'
//! ```

use amrdia::amr::{linearize, parse_penman, serialize_penman, simplify, SimplifyConfig};

fn main() {
    let text = std::env::args().nth(1).unwrap_or_else(|| {
        "(d / doctor :ARG0-of (t / treat-03 :ARG1 (p / patient :wiki \"-\" :ARG0-of (c / cough-01 :polarity -))))"
            .to_string()
    });
    let graph = match parse_penman(&text) {
        Ok(g) => g,
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(2);
        }
    };
    println!("{} nodes, {} edges", graph.node_count(), graph.edge_count());
    for e in graph.edges() {
        let n = graph.nodes();
        println!("  {} {} {}", n[e.source].concept, e.label, n[e.target].concept);
    }
    println!("canonical:  {}", serialize_penman(&graph).unwrap());
    let simple = simplify(&graph, SimplifyConfig::default());
    println!("simplified: {}", serialize_penman(&simple).unwrap());
    println!("linearized: {}", linearize(&simple).join(" "));
}
