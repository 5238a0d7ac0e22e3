//! Writes a synthetic corpus: `cargo run --example make_synthetic -- <dir> [seed]`.

use std::path::PathBuf;

use fluency::synth::{write_corpus, SynthConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "synthetic".into()));
    let seed = args.next().map_or(0, |s| s.parse().expect("seed must be an integer"));
    let manifest = write_corpus(&dir, &SynthConfig { seed, ..SynthConfig::default() })
        .unwrap_or_else(|e| {
            eprintln!("error: {e}");
            std::process::exit(1);
        });
    println!("{}", manifest.display());
}
