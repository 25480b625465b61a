use std::collections::BTreeSet;
use std::fs;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::LayoutError;
use crate::binio::{Reader, Writer};
use crate::features::{FeatureMatrix, INTER_DISTANCE_COLUMN, NUM_FEATURES, SUBJECT_WIDTH};

pub const DESCRIPTOR_COLS: usize = 157;
pub const DESCRIPTOR_CHANNELS: usize = 3;
/// Columns occupied by one subject: 32 joints, 32 velocities, 12 angle sets
/// and 2 distance columns.
pub const SUBJECT_COLS: usize = 78;
pub const DESCRIPTOR_MAGIC: &[u8; 8] = b"DIMG0001";

/// `(column, channel)` slots that never carry a feature.
pub const PADDING_SLOTS: [(usize, usize); 4] = [(77, 2), (155, 2), (156, 1), (156, 2)];

/// Image-like packing of a feature matrix: one row per frame, 157 columns,
/// 3 channels, stored row-major as `[row][column][channel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorImage {
    rows: usize,
    data: Vec<f32>,
    pub occluded_frames: BTreeSet<usize>,
}

/// Descriptor slot of a feature column. Within a subject block, feature `f`
/// lands at column `f / 3`, channel `f % 3`, which lays out joints, velocities,
/// angle sets and the two packed distance columns in order.
pub fn descriptor_slot(feature: usize) -> (usize, usize) {
    if feature == INTER_DISTANCE_COLUMN {
        return (DESCRIPTOR_COLS - 1, 0);
    }
    let subject = feature / SUBJECT_WIDTH;
    let f = feature % SUBJECT_WIDTH;
    (subject * SUBJECT_COLS + f / 3, f % 3)
}

impl DescriptorImage {
    pub fn zeros(rows: usize) -> Self {
        DescriptorImage {
            rows,
            data: vec![0.0; rows * DESCRIPTOR_COLS * DESCRIPTOR_CHANNELS],
            occluded_frames: BTreeSet::new(),
        }
    }

    pub fn from_vec(rows: usize, data: Vec<f32>) -> Result<Self, LayoutError> {
        if data.len() != rows * DESCRIPTOR_COLS * DESCRIPTOR_CHANNELS {
            return Err(LayoutError::Shape(format!(
                "{} values do not fill {rows}x{DESCRIPTOR_COLS}x{DESCRIPTOR_CHANNELS}",
                data.len()
            )));
        }
        Ok(DescriptorImage { rows, data, occluded_frames: BTreeSet::new() })
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.rows, DESCRIPTOR_COLS, DESCRIPTOR_CHANNELS]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    fn offset(row: usize, col: usize, channel: usize) -> usize {
        (row * DESCRIPTOR_COLS + col) * DESCRIPTOR_CHANNELS + channel
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.data[Self::offset(row, col, channel)]
    }

    pub fn set(&mut self, row: usize, col: usize, channel: usize, v: f32) {
        self.data[Self::offset(row, col, channel)] = v;
    }

    /// Channel-major copy, `[channel][row][column]`, as consumed by 2-D convolutions.
    pub fn to_chw(&self) -> Vec<f32> {
        let mut out = vec![0.0; self.data.len()];
        let plane = self.rows * DESCRIPTOR_COLS;
        for r in 0..self.rows {
            for c in 0..DESCRIPTOR_COLS {
                for ch in 0..DESCRIPTOR_CHANNELS {
                    out[ch * plane + r * DESCRIPTOR_COLS + c] = self.get(r, c, ch);
                }
            }
        }
        out
    }
}

pub fn build_descriptor(m: &FeatureMatrix) -> DescriptorImage {
    let mut img = DescriptorImage::zeros(m.rows());
    for t in 0..m.rows() {
        for (f, &v) in m.row(t).iter().enumerate() {
            let (col, ch) = descriptor_slot(f);
            img.set(t, col, ch, v);
        }
    }
    img.occluded_frames = m.occluded_frames.clone();
    img
}

pub fn decode_descriptor(img: &DescriptorImage) -> Result<FeatureMatrix, LayoutError> {
    for row in 0..img.rows {
        for (col, channel) in PADDING_SLOTS {
            let value = img.get(row, col, channel);
            if value.to_bits() != 0 {
                return Err(LayoutError::NonZeroPadding { row, col, channel, value });
            }
        }
    }
    let mut m = FeatureMatrix::zeros(img.rows);
    for t in 0..img.rows {
        let row = m.row_mut(t);
        for (f, v) in row.iter_mut().enumerate().take(NUM_FEATURES) {
            let (col, ch) = descriptor_slot(f);
            *v = img.get(t, col, ch);
        }
    }
    m.occluded_frames = img.occluded_frames.clone();
    Ok(m)
}

/// `"DIMG0001"`, u32 rows, u32 columns, u32 channels, row-major f32.
pub fn encode_descriptor(img: &DescriptorImage) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(DESCRIPTOR_MAGIC);
    w.u32(img.rows as u32);
    w.u32(DESCRIPTOR_COLS as u32);
    w.u32(DESCRIPTOR_CHANNELS as u32);
    for &v in &img.data {
        w.f32(v);
    }
    w.into_inner()
}

/// Inverse of [`encode_descriptor`]; all-zero rows are reported as occluded.
pub fn decode_descriptor_file(bytes: &[u8]) -> Result<DescriptorImage, LayoutError> {
    let mut r = Reader::new(bytes);
    r.magic(DESCRIPTOR_MAGIC)?;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let channels = r.u32()? as usize;
    if cols != DESCRIPTOR_COLS || channels != DESCRIPTOR_CHANNELS {
        return Err(LayoutError::Shape(format!(
            "expected {DESCRIPTOR_COLS}x{DESCRIPTOR_CHANNELS} columns/channels, found {cols}x{channels}"
        )));
    }
    let n = rows.saturating_mul(cols * channels);
    if n.saturating_mul(4) != r.remaining() {
        return Err(LayoutError::Shape(format!("payload does not match {rows} rows")));
    }
    let data = (0..n).map(|_| r.f32()).collect::<Result<Vec<_>, _>>()?;
    let mut img = DescriptorImage::from_vec(rows, data)?;
    let width = DESCRIPTOR_COLS * DESCRIPTOR_CHANNELS;
    img.occluded_frames =
        (0..rows).filter(|&t| img.data[t * width..(t + 1) * width].iter().all(|&v| v == 0.0)).collect();
    Ok(img)
}

/// Normalization constants written next to an 8-bit PNG export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PngScaling {
    pub channel_min: [f32; 3],
    pub channel_max: [f32; 3],
}

/// Writes an 8-bit RGB rendering (per-channel min-max scaled) plus a JSON
/// sidecar `<path>.json` holding the scaling constants. Lossy; inspection only.
pub fn export_png(img: &DescriptorImage, path: impl AsRef<Path>) -> Result<PngScaling, LayoutError> {
    let path = path.as_ref();
    let mut scaling = PngScaling { channel_min: [f32::INFINITY; 3], channel_max: [f32::NEG_INFINITY; 3] };
    for px in img.data.chunks_exact(3) {
        for ch in 0..3 {
            scaling.channel_min[ch] = scaling.channel_min[ch].min(px[ch]);
            scaling.channel_max[ch] = scaling.channel_max[ch].max(px[ch]);
        }
    }
    let pixels: Vec<u8> = img
        .data
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let (lo, hi) = (scaling.channel_min[i % 3], scaling.channel_max[i % 3]);
            if hi > lo {
                (((v - lo) / (hi - lo)) * 255.0).round() as u8
            } else {
                0
            }
        })
        .collect();

    let file = fs::File::create(path)?;
    let mut enc = png::Encoder::new(BufWriter::new(file), DESCRIPTOR_COLS as u32, img.rows as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| LayoutError::Png(e.to_string()))?;
    writer.write_image_data(&pixels).map_err(|e| LayoutError::Png(e.to_string()))?;
    writer.finish().map_err(|e| LayoutError::Png(e.to_string()))?;

    let mut sidecar = path.as_os_str().to_owned();
    sidecar.push(".json");
    fs::write(sidecar, serde_json::to_vec_pretty(&scaling).expect("scaling serializes"))?;
    Ok(scaling)
}
