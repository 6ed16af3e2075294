#![no_main]

use flowopt::mlp::parse_model;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(model) = parse_model(text) {
        let again = parse_model(&model.to_text()).expect("written model must parse");
        assert_eq!(again, model);
        let _ = model.forward(100.0);
    }
});
