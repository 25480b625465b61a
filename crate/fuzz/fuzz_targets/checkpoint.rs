#![no_main]

use dyadkit_nn::checkpoint::{decode, encode};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = decode(data) {
        let _ = decode(&encode(&model)).expect("re-encoded checkpoint decodes");
    }
});
