#![no_main]

use dyadkit_core::synth::SynthConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(cfg) = serde_json::from_slice::<SynthConfig>(data) {
        let _ = cfg.validate();
    }
});
