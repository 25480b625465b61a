//! Post-norm transformer encoder over the feature matrix rows.

use dyadkit_core::features::NUM_FEATURES;

use super::{Builder, Params};
use crate::real::Real;
use crate::tape::{Tape, Var};

pub(super) fn params(b: &mut Builder, dim: usize, layers: usize, ff: usize) -> usize {
    b.glorot("tf.proj.w", vec![NUM_FEATURES, dim], NUM_FEATURES, dim);
    b.fill("tf.proj.b", vec![dim], 0.0);
    for l in 0..layers {
        for m in ["q", "k", "v", "o"] {
            b.glorot(&format!("tf.l{l}.{m}.w"), vec![dim, dim], dim, dim);
            b.fill(&format!("tf.l{l}.{m}.b"), vec![dim], 0.0);
        }
        b.fill(&format!("tf.l{l}.ln1.g"), vec![dim], 1.0);
        b.fill(&format!("tf.l{l}.ln1.b"), vec![dim], 0.0);
        b.glorot(&format!("tf.l{l}.ff1.w"), vec![dim, ff], dim, ff);
        b.fill(&format!("tf.l{l}.ff1.b"), vec![ff], 0.0);
        b.glorot(&format!("tf.l{l}.ff2.w"), vec![ff, dim], ff, dim);
        b.fill(&format!("tf.l{l}.ff2.b"), vec![dim], 0.0);
        b.fill(&format!("tf.l{l}.ln2.g"), vec![dim], 1.0);
        b.fill(&format!("tf.l{l}.ln2.b"), vec![dim], 0.0);
    }
    dim
}

/// Sinusoidal position table, `frames × dim`.
pub(crate) fn positional_encoding(frames: usize, dim: usize) -> Vec<f64> {
    let mut pe = vec![0.0; frames * dim];
    for pos in 0..frames {
        for i in 0..dim {
            let rate = 10000f64.powf(-((i / 2 * 2) as f64) / dim as f64);
            let a = pos as f64 * rate;
            pe[pos * dim + i] = if i % 2 == 0 { a.sin() } else { a.cos() };
        }
    }
    pe
}

fn linear<R: Real>(t: &mut Tape<R>, p: &Params, x: Var, name: &str) -> Var {
    let y = t.matmul(x, p.get(&format!("{name}.w")));
    t.add_bias(y, p.get(&format!("{name}.b")))
}

pub(super) fn forward<R: Real>(t: &mut Tape<R>, p: &Params, x: Var, dim: usize, layers: usize, heads: usize) -> Var {
    let s = t.shape(x).to_vec();
    let (batch, frames) = (s[0], s[1]);
    let dh = dim / heads;
    let h = linear(t, p, x, "tf.proj");
    let h = t.reshape(h, vec![batch, frames * dim]);
    let pe = positional_encoding(frames, dim).into_iter().map(R::from_f64).collect();
    let pe = t.input(vec![frames * dim], pe);
    let h = t.add_bias(h, pe);
    let mut h = t.reshape(h, vec![batch * frames, dim]);
    // [B·T, D] to [B·heads, T, dh].
    let split = |t: &mut Tape<R>, v: Var| {
        let v = t.reshape(v, vec![batch, frames, heads, dh]);
        let v = t.permute(v, &[0, 2, 1, 3]);
        t.reshape(v, vec![batch * heads, frames, dh])
    };
    for l in 0..layers {
        let q = linear(t, p, h, &format!("tf.l{l}.q"));
        let k = linear(t, p, h, &format!("tf.l{l}.k"));
        let v = linear(t, p, h, &format!("tf.l{l}.v"));
        let (q, k, v) = (split(t, q), split(t, k), split(t, v));
        let scores = t.batch_matmul(q, k, true);
        let scores = t.scale(scores, 1.0 / (dh as f64).sqrt());
        let att = t.softmax(scores);
        let ctx = t.batch_matmul(att, v, false);
        let ctx = t.reshape(ctx, vec![batch, heads, frames, dh]);
        let ctx = t.permute(ctx, &[0, 2, 1, 3]);
        let ctx = t.reshape(ctx, vec![batch * frames, dim]);
        let o = linear(t, p, ctx, &format!("tf.l{l}.o"));
        let r = t.add(h, o);
        h = t.layer_norm(r, p.get(&format!("tf.l{l}.ln1.g")), p.get(&format!("tf.l{l}.ln1.b")));
        let f = linear(t, p, h, &format!("tf.l{l}.ff1"));
        let f = t.relu(f);
        let f = linear(t, p, f, &format!("tf.l{l}.ff2"));
        let r = t.add(h, f);
        h = t.layer_norm(r, p.get(&format!("tf.l{l}.ln2.g")), p.get(&format!("tf.l{l}.ln2.b")));
    }
    let h = t.reshape(h, vec![batch, frames, dim]);
    t.mean_axis1(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positional_encoding_first_rows() {
        let pe = positional_encoding(3, 4);
        assert_eq!(&pe[..4], &[0.0, 1.0, 0.0, 1.0]);
        assert!((pe[4] - 1f64.sin()).abs() < 1e-15 && (pe[5] - 1f64.cos()).abs() < 1e-15);
        assert!((pe[6] - 0.01f64.sin()).abs() < 1e-15);
    }
}
