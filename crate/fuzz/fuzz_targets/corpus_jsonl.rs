//! Fuzzes the review-corpus JSONL parser and the text pipeline behind
//! it; accepted corpora must featurize without panicking.

#![no_main]

use danlpe::data::io::parse_corpus_jsonl;
use danlpe::data::{bow_pipeline, BowOptions};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(corpus) = parse_corpus_jsonl(text) else { return };
    // Tiny vocabulary keeps the pipeline cheap; errors are fine, panics
    // are findings.
    let options = BowOptions { vocab_size: 32, ..BowOptions::default() };
    let _ = bow_pipeline(&corpus, &corpus, &options);
});
