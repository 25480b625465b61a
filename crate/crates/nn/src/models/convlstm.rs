//! Convolutional LSTM: per frame, the feature vector is a one-row image and
//! the state is a `channels × positions` map updated by 1-D convolutions.

use dyadkit_core::features::NUM_FEATURES;

use super::{lstm_cell, Builder, Params};
use crate::real::Real;
use crate::tape::{ConvGeom, Tape, Var};

fn positions(kernel: usize, stride: usize) -> usize {
    ConvGeom { kernel: (1, kernel), pad: (0, kernel / 2), stride: (1, stride) }.output(1, NUM_FEATURES).1
}

fn pooled(kernel: usize, stride: usize, pool: usize) -> usize {
    positions(kernel, stride).div_ceil(pool)
}

pub(super) fn params(b: &mut Builder, channels: usize, kernel: usize, stride: usize, pool: usize) -> usize {
    let c4 = 4 * channels;
    b.glorot("convlstm.x.w", vec![c4, 1, 1, kernel], kernel, c4 * kernel);
    b.glorot("convlstm.h.w", vec![c4, channels, 1, kernel], channels * kernel, c4 * kernel);
    b.fill("convlstm.b", vec![c4], 0.0);
    b.block_mut("convlstm.b").data[channels..2 * channels].fill(1.0);
    channels * pooled(kernel, stride, pool)
}

/// `[L, ceil(L / pool)]` averaging matrix; the last window may be short.
fn pool_matrix(len: usize, pool: usize) -> Vec<f64> {
    let out = len.div_ceil(pool);
    let mut m = vec![0.0; len * out];
    for j in 0..out {
        let (lo, hi) = (j * pool, ((j + 1) * pool).min(len));
        for i in lo..hi {
            m[i * out + j] = 1.0 / (hi - lo) as f64;
        }
    }
    m
}

pub(super) fn forward<R: Real>(
    t: &mut Tape<R>,
    p: &Params,
    x: Var,
    channels: usize,
    kernel: usize,
    stride: usize,
    pool: usize,
) -> Var {
    let s = t.shape(x).to_vec();
    let (batch, frames) = (s[0], s[1]);
    let len = positions(kernel, stride);
    let cl = channels * len;
    // Input-to-state convolution for all frames at once.
    let rows = t.reshape(x, vec![batch * frames, 1, 1, NUM_FEATURES]);
    let geom = ConvGeom { kernel: (1, kernel), pad: (0, kernel / 2), stride: (1, stride) };
    let xg = t.conv2d(rows, p.get("convlstm.x.w"), p.get("convlstm.b"), geom);
    let xg = t.reshape(xg, vec![batch, frames, 4 * cl]);
    let no_bias = t.input(vec![4 * channels], vec![R::ZERO; 4 * channels]);
    let wh = p.get("convlstm.h.w");
    let mut state: Option<(Var, Var)> = None;
    for time in 0..frames {
        let xt = t.slice_axis(xg, 1, time, 1);
        let mut gates = t.reshape(xt, vec![batch, 4 * cl]);
        if let Some((h, _)) = state {
            let hm = t.reshape(h, vec![batch, channels, 1, len]);
            let rec = t.conv2d(hm, wh, no_bias, ConvGeom::same(1, kernel));
            let rec = t.reshape(rec, vec![batch, 4 * cl]);
            gates = t.add(gates, rec);
        }
        // Gate groups are channel blocks, so each occupies a contiguous `cl` span.
        state = Some(lstm_cell(t, gates, state.map(|(_, c)| c), cl));
    }
    let h = state.expect("at least one frame").0;
    let h = t.reshape(h, vec![batch * channels, len]);
    let out = len.div_ceil(pool);
    let pm = pool_matrix(len, pool).into_iter().map(R::from_f64).collect();
    let pm = t.input(vec![len, out], pm);
    let h = t.matmul(h, pm);
    t.reshape(h, vec![batch, channels * out])
}
