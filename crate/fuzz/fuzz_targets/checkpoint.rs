//! Fuzzes the binary checkpoint decoder. Anything it accepts must
//! re-encode to the decoder's own canonical bytes.

#![no_main]

use danlpe::network::{decode_checkpoint, encode_checkpoint};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(params) = decode_checkpoint(data) else { return };
    let encoded = encode_checkpoint(&params);
    let again = decode_checkpoint(&encoded)
        .expect("encoder emitted an undecodable checkpoint");
    assert_eq!(params, again, "checkpoint changed across a round trip");
});
