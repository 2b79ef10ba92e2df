#![no_main]
use libfuzzer_sys::fuzz_target;

use sduda::dataset::{format_manifest, parse_manifest};

fuzz_target!(|text: &str| {
    if let Ok(entries) = parse_manifest(text, 4) {
        let f = format_manifest(&entries);
        assert_eq!(parse_manifest(&f, 4).unwrap(), entries);
    }
});
