#![no_main]
use libfuzzer_sys::fuzz_target;

use sduda::tensor::{decode_checkpoint, encode_checkpoint};

fuzz_target!(|data: &[u8]| {
    if let Ok(store) = decode_checkpoint(data) {
        let bytes = encode_checkpoint(&store).unwrap();
        let again = encode_checkpoint(&decode_checkpoint(&bytes).unwrap()).unwrap();
        assert_eq!(bytes, again);
    }
});
