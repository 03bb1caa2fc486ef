//! Fuzzes the dataset JSONL parser. Accepted inputs must survive a
//! save/parse round trip unchanged.

#![no_main]

use danlpe::data::io::{parse_dataset_jsonl, save_dataset};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(parsed) = parse_dataset_jsonl(text) else { return };
    let reparsed = parse_dataset_jsonl(&save_dataset(&parsed))
        .expect("serializer emitted an unparsable dataset");
    assert_eq!(parsed, reparsed, "dataset changed across a round trip");
});
