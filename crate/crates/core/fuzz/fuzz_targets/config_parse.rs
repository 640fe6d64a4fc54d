#![no_main]
use fdif_core::config::ConfigFile;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(cfg) = ConfigFile::parse(text) else { return };
    for key in cfg.keys() {
        let value = cfg.raw(key).expect("listed keys have values");
        assert!(!value.is_empty());
    }
});
