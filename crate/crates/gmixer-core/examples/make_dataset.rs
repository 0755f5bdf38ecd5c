//! Generate a ZINC-style synthetic dataset:
//!
//! ```text
//! cargo run --release --example make_dataset -- <count> <seed> <out.jsonl>
//! ```

use gmixer_core::data::synth::generate_zinc_like;
use gmixer_core::data::write_jsonl;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let count: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(12_000);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(7);
    let out = args
        .get(3)
        .map(String::as_str)
        .unwrap_or("zinc_like.jsonl");

    let graphs = generate_zinc_like(count, seed);
    write_jsonl(std::path::Path::new(out), &graphs).expect("write dataset");
    let (min_n, max_n) = graphs.iter().fold((usize::MAX, 0), |(lo, hi), g| {
        (lo.min(g.node_count()), hi.max(g.node_count()))
    });
    println!(
        "wrote {count} graphs to {out} (node counts {min_n}..={max_n}, seed {seed})"
    );
}
