//! Spatial-temporal graph convolution over the per-frame interaction graph.

use dyadkit_core::representations::{normalize_adjacency, NODES_PER_FRAME, NODE_FEATURES};

use super::{Builder, Params};
use crate::real::Real;
use crate::tape::{ConvGeom, Tape, Var};

/// `D^-1/2 (A + I) D^-1/2` of a binary `64 × 64` adjacency, symmetrized.
pub fn normalized_adjacency(adjacency: &[f64]) -> Vec<f64> {
    let v = NODES_PER_FRAME;
    let mut a = vec![0.0; v * v];
    for i in 0..v {
        for j in 0..v {
            if i != j && (adjacency[i * v + j] != 0.0 || adjacency[j * v + i] != 0.0) {
                a[i * v + j] = 1.0;
            }
        }
    }
    normalize_adjacency(&a, v)
}

pub(super) fn params(b: &mut Builder, channels: [usize; 2], temporal_kernel: usize) -> usize {
    let mut c_in = NODE_FEATURES;
    for (i, c) in channels.into_iter().enumerate() {
        b.glorot(&format!("stgcn.b{i}.gcn.w"), vec![c, c_in, 1, 1], c_in, c);
        b.fill(&format!("stgcn.b{i}.gcn.b"), vec![c], 0.0);
        b.glorot(&format!("stgcn.b{i}.tcn.w"), vec![c, c, temporal_kernel, 1], c * temporal_kernel, c * temporal_kernel);
        b.fill(&format!("stgcn.b{i}.tcn.b"), vec![c], 0.0);
        c_in = c;
    }
    c_in
}

/// Output of the last block, `[B, C, T, V]`.
pub(super) fn node_features<R: Real>(t: &mut Tape<R>, p: &Params, x: Var, a: Var, temporal_kernel: usize, stride: usize) -> Var {
    let mut h = x;
    for i in 0..2 {
        let w = p.get(&format!("stgcn.b{i}.gcn.w"));
        h = t.conv2d(h, w, p.get(&format!("stgcn.b{i}.gcn.b")), ConvGeom::same(1, 1));
        let s = t.shape(h).to_vec();
        let flat = t.reshape(h, vec![s[0], s[1] * s[2], s[3]]);
        let mixed = t.batch_matmul(flat, a, false);
        h = t.reshape(mixed, s);
        h = t.relu(h);
        let w = p.get(&format!("stgcn.b{i}.tcn.w"));
        let mut geom = ConvGeom::same(temporal_kernel, 1);
        if i == 1 {
            geom.stride = (stride, 1);
        }
        h = t.conv2d(h, w, p.get(&format!("stgcn.b{i}.tcn.b")), geom);
        h = t.relu(h);
    }
    h
}

/// Global average over frames and nodes, `[B, C]`.
pub(super) fn pool<R: Real>(t: &mut Tape<R>, h: Var) -> Var {
    let s = t.shape(h).to_vec();
    let n = s[2] * s[3];
    let flat = t.reshape(h, vec![s[0] * s[1], n]);
    let avg = t.input(vec![n, 1], vec![R::from_f64(1.0 / n as f64); n]);
    let m = t.matmul(flat, avg);
    t.reshape(m, vec![s[0], s[1]])
}
