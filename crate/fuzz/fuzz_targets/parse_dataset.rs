#![no_main]

use flowopt::dataset::{read_dataset_from, write_dataset_to, Role};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ds) = read_dataset_from(data, Role::Training) {
        let links = ds.link_count().unwrap_or(1);
        let mut buf = Vec::new();
        write_dataset_to(&ds, links, &mut buf).expect("write to memory");
        let again =
            read_dataset_from(&buf[..], Role::Training).expect("written dataset must parse");
        assert_eq!(again.rows, ds.rows);
    }
});
