#![no_main]

use dyadkit_harness::report::{parse_json, render_table};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(file) = parse_json(text) {
            let _ = render_table(&file.reports);
        }
    }
});
