#![no_main]

use flowopt::parse_topology;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(topo) = parse_topology(text) {
        let again = parse_topology(&topo.to_string()).expect("printed topology must parse");
        assert_eq!(again, topo);
    }
});
