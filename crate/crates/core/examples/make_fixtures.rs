//! Regenerates the checked-in synthetic corpus.
//!
//! cargo run -p cgvm-core --example make_fixtures -- fixtures/corpus

use cgvm_core::synth::{write_corpus, SynthSpec};

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "fixtures/corpus".into());
    if std::path::Path::new(&out).exists() {
        std::fs::remove_dir_all(&out).expect("clear output directory");
    }
    let corpus = write_corpus(&out, &SynthSpec::default()).expect("write corpus");
    println!("wrote {} samples to {}", corpus.dataset.samples.len(), corpus.root.display());
}
