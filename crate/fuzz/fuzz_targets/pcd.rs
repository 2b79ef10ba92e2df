#![no_main]
use libfuzzer_sys::fuzz_target;

use sduda::dataset::{decode_cloud, encode_cloud};

fuzz_target!(|data: &[u8]| {
    if let Ok(pc) = decode_cloud(data) {
        let bytes = encode_cloud(&pc);
        assert_eq!(encode_cloud(&decode_cloud(&bytes).unwrap()), bytes);
    }
});
