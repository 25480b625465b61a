#![no_main]

use dyadkit_core::capture::decode_binary;
use dyadkit_core::skeleton::OcclusionRule;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = decode_binary(data, &OcclusionRule::default());
});
