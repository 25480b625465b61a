#![no_main]

use dyadkit_core::representations::{decode_descriptor, decode_descriptor_file};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = decode_descriptor_file(data) {
        let _ = decode_descriptor(&img);
    }
});
