#![no_main]
use libfuzzer_sys::fuzz_target;

use sduda::metrics::{format_csv, parse_csv};

fuzz_target!(|text: &str| {
    if let Ok(records) = parse_csv(text) {
        let f = format_csv(&records);
        assert_eq!(format_csv(&parse_csv(&f).unwrap()), f);
    }
});
