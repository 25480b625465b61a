//! Bidirectional LSTM over the feature matrix rows.

use dyadkit_core::features::NUM_FEATURES;

use super::{lstm_cell, Builder, Params};
use crate::real::Real;
use crate::tape::{Tape, Var};

pub(super) fn params(b: &mut Builder, hidden: usize) -> usize {
    for dir in ["fwd", "bwd"] {
        b.glorot(&format!("bilstm.{dir}.wx"), vec![NUM_FEATURES, 4 * hidden], NUM_FEATURES, 4 * hidden);
        b.glorot(&format!("bilstm.{dir}.wh"), vec![hidden, 4 * hidden], hidden, 4 * hidden);
        b.fill(&format!("bilstm.{dir}.b"), vec![4 * hidden], 0.0);
        b.block_mut(&format!("bilstm.{dir}.b")).data[hidden..2 * hidden].fill(1.0);
    }
    2 * hidden
}

/// Runs one direction and returns its final hidden state `[B, hidden]`.
fn run<R: Real>(t: &mut Tape<R>, p: &Params, x: Var, dir: &str, hidden: usize, reverse: bool) -> Var {
    let s = t.shape(x).to_vec();
    let (batch, frames) = (s[0], s[1]);
    let xw = t.matmul(x, p.get(&format!("bilstm.{dir}.wx")));
    let xw = t.add_bias(xw, p.get(&format!("bilstm.{dir}.b")));
    let wh = p.get(&format!("bilstm.{dir}.wh"));
    let mut state: Option<(Var, Var)> = None;
    for step in 0..frames {
        let time = if reverse { frames - 1 - step } else { step };
        let xt = t.slice_axis(xw, 1, time, 1);
        let mut gates = t.reshape(xt, vec![batch, 4 * hidden]);
        if let Some((h, _)) = state {
            let rec = t.matmul(h, wh);
            gates = t.add(gates, rec);
        }
        state = Some(lstm_cell(t, gates, state.map(|(_, c)| c), hidden));
    }
    state.expect("at least one frame").0
}

pub(super) fn forward<R: Real>(t: &mut Tape<R>, p: &Params, x: Var, hidden: usize) -> Var {
    let f = run(t, p, x, "fwd", hidden, false);
    let b = run(t, p, x, "bwd", hidden, true);
    t.concat_cols(&[f, b])
}
