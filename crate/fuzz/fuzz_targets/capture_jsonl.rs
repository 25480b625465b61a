#![no_main]

use dyadkit_core::capture::parse_jsonl;
use dyadkit_core::skeleton::OcclusionRule;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = parse_jsonl(data, &OcclusionRule::default());
});
