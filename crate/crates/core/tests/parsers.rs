//! Round-trip and robustness checks for the text parsers, replaying the fuzz
//! corpus and arbitrary input.

use std::path::PathBuf;

use flowopt::dataset::{read_dataset_from, write_dataset_to, Role};
use flowopt::mlp::parse_model;
use flowopt::parse_topology;
use proptest::prelude::*;

fn corpus(target: &str) -> Vec<Vec<u8>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut files: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| std::fs::read(p).unwrap())
        .collect()
}

fn topology_round_trip(data: &[u8]) -> bool {
    let Ok(text) = std::str::from_utf8(data) else {
        return false;
    };
    match parse_topology(text) {
        Ok(t) => {
            assert_eq!(parse_topology(&t.to_string()).unwrap(), t);
            true
        }
        Err(_) => false,
    }
}

fn model_round_trip(data: &[u8]) -> bool {
    let Ok(text) = std::str::from_utf8(data) else {
        return false;
    };
    match parse_model(text) {
        Ok(m) => {
            assert_eq!(parse_model(&m.to_text()).unwrap(), m);
            true
        }
        Err(_) => false,
    }
}

fn dataset_round_trip(data: &[u8]) -> bool {
    match read_dataset_from(data, Role::Training) {
        Ok(ds) => {
            let mut buf = Vec::new();
            write_dataset_to(&ds, ds.link_count().unwrap_or(1), &mut buf).unwrap();
            assert_eq!(
                read_dataset_from(&buf[..], Role::Training).unwrap().rows,
                ds.rows
            );
            true
        }
        Err(_) => false,
    }
}

#[test]
fn corpus_replays() {
    let parsed = corpus("parse_topology")
        .iter()
        .filter(|d| topology_round_trip(d))
        .count();
    assert_eq!(parsed, 3);
    let parsed = corpus("parse_model")
        .iter()
        .filter(|d| model_round_trip(d))
        .count();
    assert_eq!(parsed, 2);
    let parsed = corpus("parse_dataset")
        .iter()
        .filter(|d| dataset_round_trip(d))
        .count();
    assert_eq!(parsed, 3);
}

fn topology_line() -> impl Strategy<Value = String> {
    prop_oneof![
        (0usize..6, 0u32..9, 0u32..9, -10.0f64..500.0)
            .prop_map(|(i, a, b, c)| format!("link {i} {a} {b} {c}")),
        Just("# note".to_string()),
        Just(String::new()),
        "[ -~]{0,20}",
    ]
}

proptest! {
    #[test]
    fn topology_lines_never_panic(lines in prop::collection::vec(topology_line(), 0..8)) {
        topology_round_trip(lines.join("\n").as_bytes());
    }

    #[test]
    fn arbitrary_bytes_never_panic(data in prop::collection::vec(any::<u8>(), 0..200)) {
        topology_round_trip(&data);
        model_round_trip(&data);
        dataset_round_trip(&data);
    }

    #[test]
    fn mutated_model_never_panics(pos in 0usize..400, byte in any::<u8>()) {
        let mut data = corpus("parse_model").remove(1);
        let i = pos % data.len();
        data[i] = byte;
        model_round_trip(&data);
    }

    #[test]
    fn mutated_dataset_never_panics(pos in 0usize..4000, byte in any::<u8>()) {
        let mut data = corpus("parse_dataset").remove(2);
        let i = pos % data.len();
        data[i] = byte;
        dataset_round_trip(&data);
    }
}
