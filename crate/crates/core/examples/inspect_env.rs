//! Prints the path options of environment files with their distance, risk,
//! objective cost and choice probability.
//!
//! `cargo run --example inspect_env -- configs/envs/env1.toml`

use cotransport::config::load_environment;
use cotransport::geometry::{enumerate_options, DEFAULT_RISK_WEIGHT};
use cotransport::preference::{choice_distribution, ParamBox, DEFAULT_GRID_N};

fn main() {
    for path in std::env::args().skip(1) {
        let env = match load_environment(&path) {
            Ok(env) => env,
            Err(e) => {
                eprintln!("{e}");
                std::process::exit(2);
            }
        };
        let options = enumerate_options(&env, &env.start);
        println!("{} ({} options)", env.name, options.len());
        if options.is_empty() {
            continue;
        }
        let pairs: Vec<(f64, f64)> = options.iter().map(|o| (o.distance, o.risk)).collect();
        let probs = choice_distribution(&pairs, &ParamBox::default(), DEFAULT_RISK_WEIGHT, DEFAULT_GRID_N);
        for (o, p) in options.iter().zip(&probs.probs) {
            let seq: Vec<&str> = o.openings.iter().map(|id| id.as_str()).collect();
            println!(
                "  {:<10} {:<22} D={:8.3} S={:.4} J={:8.3} P={:6.2}%",
                env.label_for(&o.openings).unwrap_or("-"),
                seq.join(","),
                o.distance,
                o.risk,
                o.objective_cost(DEFAULT_RISK_WEIGHT),
                100.0 * p
            );
        }
    }
}
