//! Seed-averaged MAP of every variant on the synthetic planted-event
//! benchmark.
//!
//! ```text
//! cargo run --release -p tagbook --example synth_benchmark -- [seeds] [spec.json]
//! ```

use std::collections::BTreeMap;

use tagbook::evalkit::{benchmark, synth_corpus, DetectionMode, SynthSpec};
use tagbook::events::SvmParams;
use tagbook::{PropagationConfig, Variant};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(20);
    let spec: SynthSpec = match args.next() {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => SynthSpec::default(),
    };
    let config = PropagationConfig::default();
    let svm = SvmParams {
        normalize_inputs: true,
        ..SvmParams::default()
    };

    let mut sums: BTreeMap<(Variant, DetectionMode), f64> = BTreeMap::new();
    for seed in 0..seeds {
        let dataset = synth_corpus(&SynthSpec { seed, ..spec.clone() })?;
        let maps = benchmark(&dataset, &config, &svm)?;
        let row: Vec<String> = maps.iter().map(|((v, m), map)| format!("{v}/{m:?}={map:.3}")).collect();
        println!("seed {seed:>2}: {}", row.join("  "));
        for (key, map) in maps {
            *sums.entry(key).or_default() += map;
        }
    }
    println!("mean over {seeds} seeds:");
    for ((variant, mode), sum) in sums {
        println!("  {variant:<6} {mode:?}: {:.4}", sum / seeds as f64);
    }
    Ok(())
}
