#![no_main]

use libfuzzer_sys::fuzz_target;
use rmader_core::harness::config::ScenarioConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = ScenarioConfig::from_toml(text) {
        // Compare serialized forms so NaN fields cannot fail equality.
        let once = cfg.to_toml();
        let back = ScenarioConfig::from_toml(&once).expect("serialized config reparses");
        assert_eq!(back.to_toml(), once);
    }
});
