#![no_main]

use abworld::harness::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(config) = ExperimentConfig::from_toml_str(text) {
        let again = ExperimentConfig::from_toml_str(&config.to_toml_string())
            .expect("serialized config parses");
        assert_eq!(again, config);
    }
});
