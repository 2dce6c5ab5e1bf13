//! Writes the synthetic corpus as JSONL to stdout.
//!
//! `cargo run --example synthetic -- [seed]`

use std::io::{self, BufWriter};

use fewshot::formats::write_requirements_jsonl;
use fewshot_core::synthetic::{synthetic_corpus, DEFAULT_SIZES};

fn main() -> anyhow::Result<()> {
    let seed = match std::env::args().nth(1) {
        Some(s) => s.parse()?,
        None => 7,
    };
    let corpus = synthetic_corpus(DEFAULT_SIZES, seed);
    write_requirements_jsonl(BufWriter::new(io::stdout().lock()), corpus.requirements())?;
    Ok(())
}
