#![no_main]

use abworld::craft::{CraftEnv, EnvConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(config) = EnvConfig::from_toml_str(text) {
        let again =
            EnvConfig::from_toml_str(&config.to_toml_string()).expect("serialized config parses");
        assert_eq!(again.vocab, config.vocab);
        let env = CraftEnv::new(config);
        let state = env.reset(0);
        let _ = env.map_m(&state);
    }
});
