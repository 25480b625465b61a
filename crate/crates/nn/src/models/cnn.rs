//! Two-stage convolutional network over the descriptor image.

use dyadkit_core::representations::{DESCRIPTOR_CHANNELS, DESCRIPTOR_COLS};

use super::{Builder, Params};
use crate::real::Real;
use crate::tape::{ConvGeom, Tape, Var};

pub(super) fn params(b: &mut Builder, frames: usize, channels: [usize; 2], kernel: usize, pool: usize) -> usize {
    let [c1, c2] = channels;
    let kk = kernel * kernel;
    b.glorot("cnn.conv1.w", vec![c1, DESCRIPTOR_CHANNELS, kernel, kernel], DESCRIPTOR_CHANNELS * kk, c1 * kk);
    b.fill("cnn.conv1.b", vec![c1], 0.0);
    b.glorot("cnn.conv2.w", vec![c2, c1, kernel, kernel], c1 * kk, c2 * kk);
    b.fill("cnn.conv2.b", vec![c2], 0.0);
    c2 * (frames / pool / pool) * (DESCRIPTOR_COLS / pool / pool)
}

pub(super) fn forward<R: Real>(t: &mut Tape<R>, p: &Params, x: Var, pool: usize) -> Var {
    let mut h = x;
    for stage in ["cnn.conv1", "cnn.conv2"] {
        let w = p.get(&format!("{stage}.w"));
        let k = t.shape(w)[2];
        h = t.conv2d(h, w, p.get(&format!("{stage}.b")), ConvGeom::same(k, k));
        h = t.relu(h);
        h = t.max_pool2d(h, pool);
    }
    let s = t.shape(h).to_vec();
    t.reshape(h, vec![s[0], s[1..].iter().product()])
}
