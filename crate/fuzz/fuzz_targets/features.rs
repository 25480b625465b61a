#![no_main]

use dyadkit_core::features::{decode_features, encode_features};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = decode_features(data) {
        let _ = decode_features(&encode_features(&m)).expect("re-encoded matrix decodes");
    }
});
