#![no_main]

use dyadkit_core::representations::decode_graph;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(g) = decode_graph(data) {
        let _ = g.frame_adjacency();
        let _ = g.node_tensor();
    }
});
