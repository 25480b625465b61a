use std::collections::BTreeSet;

use super::LayoutError;
use crate::binio::{FormatError, Reader, Writer};
use crate::features::{
    AngleId, FeatureMatrix, ANGLE_OFFSET, INTER_DISTANCE_COLUMN, JOINT_OFFSET, SUBJECT_WIDTH,
    VELOCITY_OFFSET,
};
use crate::skeleton::{bones, DyadSample, JointId, NUM_JOINTS};

pub const NODE_FEATURES: usize = 9;
pub const BODIES: usize = 2;
/// Nodes in one frame: both bodies' joints.
pub const NODES_PER_FRAME: usize = BODIES * NUM_JOINTS;
pub const GRAPH_MAGIC: &[u8; 8] = b"GRPH0001";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum EdgeKind {
    /// Parent-child bone within one body; attribute is the bone length (mm).
    Natural = 0,
    /// Same joint in consecutive frames; attribute is the displacement (mm).
    Temporal = 1,
    /// SPINE_NAVAL of body 1 to SPINE_NAVAL of body 2; attribute is their distance (mm).
    Interbody = 2,
}

impl EdgeKind {
    fn from_u8(v: u8) -> Option<EdgeKind> {
        match v {
            0 => Some(EdgeKind::Natural),
            1 => Some(EdgeKind::Temporal),
            2 => Some(EdgeKind::Interbody),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub kind: EdgeKind,
    pub src: u32,
    pub dst: u32,
    pub attr: f32,
}

/// Joints-as-nodes graph over all frames of a sample.
///
/// Node `(t, m, j)` lives at index `(t * 2 + m) * 32 + j` and carries
/// `(x, y, z, vx, vy, vz, angle, angular velocity, confidence)`; the last
/// three are zero for joints that are not an angle apex.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionGraph {
    pub frames: usize,
    pub nodes: Vec<[f32; NODE_FEATURES]>,
    pub edges: Vec<Edge>,
}

pub fn node_index(t: usize, body: usize, joint: JointId) -> usize {
    (t * BODIES + body) * NUM_JOINTS + joint.index()
}

fn joint_xyz(row: &[f32], base: usize, j: usize) -> [f32; 3] {
    [row[base + 3 * j], row[base + 3 * j + 1], row[base + 3 * j + 2]]
}

fn dist(a: [f32; 3], b: [f32; 3]) -> f32 {
    let d: f64 = (0..3).map(|k| (a[k] as f64 - b[k] as f64).powi(2)).sum();
    d.sqrt() as f32
}

/// Builds the graph of `sample` from its feature matrix `m`. Frames occluded
/// in either get zero node features and zero edge attributes; topology never
/// changes.
pub fn build_graph(sample: &DyadSample, m: &FeatureMatrix) -> InteractionGraph {
    let occluded: BTreeSet<usize> = sample.occluded_frames.union(&m.occluded_frames).copied().collect();
    build_graph_with_occlusion(m, &occluded)
}

/// As [`build_graph`], using only the occlusion recorded in `m`.
pub fn build_graph_from_features(m: &FeatureMatrix) -> InteractionGraph {
    build_graph_with_occlusion(m, &m.occluded_frames)
}

fn build_graph_with_occlusion(m: &FeatureMatrix, occluded: &BTreeSet<usize>) -> InteractionGraph {
    let frames = m.rows();
    let mut nodes = vec![[0.0f32; NODE_FEATURES]; frames * NODES_PER_FRAME];
    let apex: Vec<Option<AngleId>> = JointId::ALL.iter().map(|&j| AngleId::at_apex(j)).collect();

    for t in 0..frames {
        if occluded.contains(&t) {
            continue;
        }
        let row = m.row(t);
        for body in 0..BODIES {
            let base = body * SUBJECT_WIDTH;
            for j in JointId::ALL {
                let n = &mut nodes[node_index(t, body, j)];
                let ji = j.index();
                n[..3].copy_from_slice(&joint_xyz(row, base + JOINT_OFFSET, ji));
                n[3..6].copy_from_slice(&joint_xyz(row, base + VELOCITY_OFFSET, ji));
                if let Some(a) = apex[ji] {
                    let k = base + ANGLE_OFFSET + 3 * a.index();
                    n[6..9].copy_from_slice(&row[k..k + 3]);
                }
            }
        }
    }

    let bone_list = bones();
    let mut edges = Vec::with_capacity(
        frames * BODIES * bone_list.len() + frames.saturating_sub(1) * NODES_PER_FRAME + frames,
    );
    for t in 0..frames {
        let live = !occluded.contains(&t);
        let row = m.row(t);
        for body in 0..BODIES {
            let base = body * SUBJECT_WIDTH + JOINT_OFFSET;
            for &(p, c) in &bone_list {
                let attr = if live {
                    dist(joint_xyz(row, base, p.index()), joint_xyz(row, base, c.index()))
                } else {
                    0.0
                };
                edges.push(Edge {
                    kind: EdgeKind::Natural,
                    src: node_index(t, body, p) as u32,
                    dst: node_index(t, body, c) as u32,
                    attr,
                });
            }
        }
    }
    for t in 0..frames.saturating_sub(1) {
        let live = !occluded.contains(&t) && !occluded.contains(&(t + 1));
        for body in 0..BODIES {
            let base = body * SUBJECT_WIDTH + JOINT_OFFSET;
            for j in JointId::ALL {
                let attr = if live {
                    dist(joint_xyz(m.row(t), base, j.index()), joint_xyz(m.row(t + 1), base, j.index()))
                } else {
                    0.0
                };
                edges.push(Edge {
                    kind: EdgeKind::Temporal,
                    src: node_index(t, body, j) as u32,
                    dst: node_index(t + 1, body, j) as u32,
                    attr,
                });
            }
        }
    }
    for t in 0..frames {
        let attr = if occluded.contains(&t) { 0.0 } else { m.get(t, INTER_DISTANCE_COLUMN) };
        edges.push(Edge {
            kind: EdgeKind::Interbody,
            src: node_index(t, 0, JointId::SpineNaval) as u32,
            dst: node_index(t, 1, JointId::SpineNaval) as u32,
            attr,
        });
    }
    InteractionGraph { frames, nodes, edges }
}

impl InteractionGraph {
    pub fn count(&self, kind: EdgeKind) -> usize {
        self.edges.iter().filter(|e| e.kind == kind).count()
    }

    /// Binary per-frame adjacency (64 x 64, row-major, symmetric, no self
    /// loops) from the natural and inter-body edges.
    pub fn frame_adjacency(&self) -> Vec<f64> {
        let mut a = vec![0.0; NODES_PER_FRAME * NODES_PER_FRAME];
        for e in &self.edges {
            if e.kind == EdgeKind::Temporal {
                continue;
            }
            let (s, d) = (e.src as usize, e.dst as usize);
            if s / NODES_PER_FRAME != 0 || d / NODES_PER_FRAME != 0 {
                continue;
            }
            a[s * NODES_PER_FRAME + d] = 1.0;
            a[d * NODES_PER_FRAME + s] = 1.0;
        }
        a
    }

    /// Node features as a channel-major `[9][frames][64]` buffer.
    pub fn node_tensor(&self) -> Vec<f32> {
        let plane = self.frames * NODES_PER_FRAME;
        let mut out = vec![0.0; NODE_FEATURES * plane];
        for (i, n) in self.nodes.iter().enumerate() {
            for (c, &v) in n.iter().enumerate() {
                out[c * plane + i] = v;
            }
        }
        out
    }
}

/// Symmetric normalization `D^-1/2 (A + I) D^-1/2` of a square adjacency.
pub fn normalize_adjacency(a: &[f64], n: usize) -> Vec<f64> {
    let mut with_loops = a.to_vec();
    for i in 0..n {
        with_loops[i * n + i] += 1.0;
    }
    let inv_sqrt_deg: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = with_loops[i * n..(i + 1) * n].iter().sum();
            1.0 / d.sqrt()
        })
        .collect();
    for i in 0..n {
        for j in 0..n {
            with_loops[i * n + j] *= inv_sqrt_deg[i] * inv_sqrt_deg[j];
        }
    }
    with_loops
}

/// `"GRPH0001"`, u32 frames, u32 bodies, u32 joints, u32 node features,
/// node table (f32), u32 edge count, edges as (u8 kind, u32 src, u32 dst, f32 attr).
pub fn encode_graph(g: &InteractionGraph) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(GRAPH_MAGIC);
    w.u32(g.frames as u32);
    w.u32(BODIES as u32);
    w.u32(NUM_JOINTS as u32);
    w.u32(NODE_FEATURES as u32);
    for n in &g.nodes {
        for &v in n {
            w.f32(v);
        }
    }
    w.u32(g.edges.len() as u32);
    for e in &g.edges {
        w.u8(e.kind as u8);
        w.u32(e.src);
        w.u32(e.dst);
        w.f32(e.attr);
    }
    w.into_inner()
}

pub fn decode_graph(bytes: &[u8]) -> Result<InteractionGraph, LayoutError> {
    let mut r = Reader::new(bytes);
    r.magic(GRAPH_MAGIC)?;
    let frames = r.u32()? as usize;
    let (bodies, joints, feats) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    if (bodies, joints, feats) != (BODIES, NUM_JOINTS, NODE_FEATURES) {
        return Err(LayoutError::Shape(format!(
            "unsupported graph layout {bodies} bodies x {joints} joints x {feats} features"
        )));
    }
    let node_count = frames.saturating_mul(NODES_PER_FRAME);
    if node_count.saturating_mul(NODE_FEATURES * 4) > r.remaining() {
        return Err(FormatError::Truncated { offset: bytes.len() }.into());
    }
    let mut nodes = Vec::with_capacity(node_count);
    for _ in 0..node_count {
        let mut n = [0.0f32; NODE_FEATURES];
        for v in n.iter_mut() {
            *v = r.f32()?;
        }
        nodes.push(n);
    }
    let edge_count = r.count(13)?;
    let mut edges = Vec::with_capacity(edge_count);
    for _ in 0..edge_count {
        let k = r.u8()?;
        let kind = EdgeKind::from_u8(k).ok_or_else(|| FormatError::Invalid(format!("edge kind {k}")))?;
        let (src, dst) = (r.u32()?, r.u32()?);
        if src as usize >= node_count || dst as usize >= node_count {
            return Err(FormatError::Invalid(format!("edge {src}->{dst} outside {node_count} nodes")).into());
        }
        edges.push(Edge { kind, src, dst, attr: r.f32()? });
    }
    r.finish()?;
    Ok(InteractionGraph { frames, nodes, edges })
}
