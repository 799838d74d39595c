//! Finite-difference check of the full model loss.
//!
//! ```text
//! cargo run --release --example gradcheck
//! ```

use amrdia::pipeline::{run_gradcheck, AppConfig};

fn main() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let cfg = AppConfig::load(&root.join("gradcheck.toml")).unwrap();
    let start = std::time::Instant::now();
    match run_gradcheck(&cfg, 16) {
        Ok(r) => println!(
            "{} coordinates, max relative error {:.2e} at {}[{}] (analytic {:.6e}, numeric {:.6e}), {:.1?}",
            r.coordinates,
            r.max_rel_error,
            r.worst_param,
            r.worst_index,
            r.analytic,
            r.numeric,
            start.elapsed()
        ),
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(3);
        }
    }
}
