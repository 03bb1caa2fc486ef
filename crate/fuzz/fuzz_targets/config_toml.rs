//! Fuzzes the TOML experiment-config parser. Accepted configs must keep
//! a stable hash across a serialize/parse round trip.

#![no_main]

use danlpe::config::{config_hash, parse_config_str};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(config) = parse_config_str(text) else { return };
    let serialized = toml::to_string(&config).expect("accepted config must serialize");
    let reparsed = parse_config_str(&serialized)
        .expect("serializer emitted an unparsable config");
    assert_eq!(
        config_hash(&config),
        config_hash(&reparsed),
        "config hash changed across a round trip"
    );
});
