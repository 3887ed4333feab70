#![no_main]

use libfuzzer_sys::fuzz_target;
use subsetsearch::experiment::ExperimentConfig;
use subsetsearch::kv::KeyValues;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(kv) = KeyValues::parse(text) {
        assert_eq!(KeyValues::parse(&kv.to_text()).unwrap(), kv);
    }
    if let Ok(config) = ExperimentConfig::parse(text) {
        let canonical = config.canonical_text();
        let again = ExperimentConfig::parse(&canonical).unwrap();
        assert_eq!(again.canonical_text(), canonical);
        assert_eq!(again.hash(), config.hash());
    }
});
