#![no_main]
use fdif_core::detect::LogisticModel;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(model) = LogisticModel::parse(text) else { return };
    let again = LogisticModel::parse(&model.to_text()).expect("own output parses");
    assert_eq!(again, model);
});
